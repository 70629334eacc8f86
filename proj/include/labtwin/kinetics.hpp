#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "labtwin/state.hpp"

namespace labtwin {

inline constexpr double kGasConstant = 8.314462618;  // J/(mol K)
inline constexpr double kZeroCelsius = 273.15;

/// Solvent mass plus molality (mol per kg solvent) of each solute.
struct Mixture {
  double solvent_mass = 0.0;
  std::map<std::string, double> molality;
  std::string color;

  double molality_of(const std::string& species) const;
  double moles(const std::string& species) const { return molality_of(species) * solvent_mass; }
};

struct Solute {
  std::string species;
  double moles = 0.0;
};

Mixture make_mixture(double solvent_mass, std::span<const Solute> solutes);

/// Moves `mass` kg of solvent from src to dst; solutes follow in proportion.
std::pair<Mixture, Mixture> pour(const Mixture& src, const Mixture& dst, double mass);

struct TemperatureRange {
  double min = kZeroCelsius;          // K
  double max = kZeroCelsius + 200.0;  // K
  bool contains(double t) const { return t >= min && t <= max; }
};

struct ConstantK {
  double k = 0.0;
};

struct Arrhenius {
  double A = 0.0;   // pre-exponential factor, units follow the overall order
  double Ea = 0.0;  // J/mol
};

struct ReactantTerm {
  std::string species;
  int coefficient = 1;
  double order = 1.0;
};

struct ProductTerm {
  std::string species;
  int coefficient = 1;
};

/// Forward-only reaction with an explicit rate law.
struct ReactionTemplate {
  std::string id;
  std::vector<ReactantTerm> reactants;
  std::vector<ProductTerm> products;
  std::variant<ConstantK, Arrhenius> kinetics = ConstantK{};
  /// Gate: no reaction outside this solution temperature window.
  std::optional<TemperatureRange> temperature_window;
  /// Temperatures are clamped into this range before evaluating Arrhenius.
  TemperatureRange arrhenius_clamp{};
  /// Containers the template applies in; empty means every container.
  std::vector<EntityId> containers;
};

void validate_template(const ReactionTemplate& tpl);

double arrhenius_k(double A, double Ea, double T, const TemperatureRange& clamp = {});
double rate_constant(const ReactionTemplate& tpl, double T);

/// k(T) * prod [X]^order, or 0 when a precondition fails.
double reaction_rate(const ReactionTemplate& tpl, const Mixture& mix, double T);

/// d[X]/dt per species for one template (zero map entries when gated).
std::map<std::string, double> species_rates(const ReactionTemplate& tpl, const Mixture& mix, double T);

// Environment-level operations over mixture holders.

Mixture read_mixture(const EnvironmentState& env, std::string_view holder);
void write_mixture(EnvironmentState& env, std::string_view holder, const Mixture& mix);
double molality(const EnvironmentState& env, std::string_view holder, std::string_view species);
double total_moles(const EnvironmentState& env, std::string_view species);
double total_solvent(const EnvironmentState& env);
/// Solution temperature used by kinetics: the container's "T" node if it has
/// one, else the ambient node, else 298.15 K.
double solution_temperature(const EnvironmentState& env, std::size_t container);

/// In-place transfer between two mixture holders (containers or pipette tips).
void transfer_solution(EnvironmentState& env, std::size_t src_entity, std::size_t dst_entity, double mass);

/// Registers one gated kinetics process per applicable container.
void register_reaction(EnvironmentState& env, const ReactionTemplate& tpl);

/// ds/dt (indexed like s) from all kinetics processes at the current state.
std::vector<double> kinetics_process(const EnvironmentState& env);

}  // namespace labtwin
