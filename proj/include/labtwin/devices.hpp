#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "labtwin/action.hpp"
#include "labtwin/state.hpp"

namespace labtwin {

/// Logical slot `on:<surface>` on `object`, kept equal to
/// (object.support == surface) by a contact event. Returns the existing slot
/// when the pair is already installed.
SlotId install_contact(EnvironmentState& env, std::string_view object, std::string_view surface);
std::string contact_slot_name(std::string_view surface);

/// "set" command: heaterOn := payload.flag; T_target := payload.value when > 0.
void install_heater(EnvironmentState& env, std::string_view id);

/// Keeps `reading` equal to scale_read() after every step.
void install_scale(EnvironmentState& env, std::string_view id);

/// Sum over containers whose support is the scale of tare_mass + solvent +
/// solute mass (species with a molar mass), minus the scale's zero_offset.
double scale_read(const EnvironmentState& env, std::string_view id);

/// Tip handling, immersion tracking and instantaneous aspirate/dispense.
void install_liquid_handler(EnvironmentState& env, std::string_view id);

struct FaucetSpec {
  EntityId id;
  EntityId target;
  double flow_coefficient = 0.0;  // kg/(s rad)
  double max_angle = 0.0;         // rad
};

void install_faucet(EnvironmentState& env, const FaucetSpec& spec);

/// Microlitres to kg for a holder (container parameter `density`, g/mL,
/// default 1.0).
double volume_to_mass(const EnvironmentState& env, std::size_t holder, double microlitres);

enum class LiquidHandlerOp { load_tip, remove_tip, move_to, aspirate, dispense };

std::string_view to_string(LiquidHandlerOp op);
std::optional<LiquidHandlerOp> parse_liquid_handler_op(std::string_view text);

struct LiquidHandlerCommand {
  LiquidHandlerOp op = LiquidHandlerOp::load_tip;
  EntityId target;          // move_to
  double volume_ul = 0.0;   // aspirate / dispense
};

// Action builders. Each checks that `id` names an entity of the right kind.
DiscreteAction heater_command(const EnvironmentState& env, std::string_view id, bool on, double t_target);
DiscreteAction liquid_handler_command(const EnvironmentState& env, std::string_view id,
                                      const LiquidHandlerCommand& cmd);
DiscreteAction knob_command(const EnvironmentState& env, std::string_view id, double angle);
DiscreteAction place_command(const EnvironmentState& env, std::string_view object, std::string_view surface);
DiscreteAction pick_command(const EnvironmentState& env, std::string_view object);

}  // namespace labtwin
