#include "labtwin/devices.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "labtwin/engine.hpp"
#include "labtwin/kinetics.hpp"
#include "labtwin/process.hpp"

namespace labtwin {

namespace {

std::size_t require_kind(const EnvironmentState& env, std::string_view id, EntityKind kind) {
  const std::size_t e = env.entity_index(id);
  if (env.entity(e).kind != kind) {
    fail(ErrorCode::ValidationError, std::string(id) + " is not a " + std::string(to_string(kind)));
  }
  return e;
}

[[noreturn]] void precondition_failed(std::string_view id, std::string_view name) {
  fail(ErrorCode::PreconditionFailed, std::string(name) + " (" + std::string(id) + ")");
}

constexpr std::array<std::pair<LiquidHandlerOp, std::string_view>, 5> kOps{{
    {LiquidHandlerOp::load_tip, "load_tip"},
    {LiquidHandlerOp::remove_tip, "remove_tip"},
    {LiquidHandlerOp::move_to, "move_to"},
    {LiquidHandlerOp::aspirate, "aspirate"},
    {LiquidHandlerOp::dispense, "dispense"},
}};

}  // namespace

std::string contact_slot_name(std::string_view surface) { return "on:" + std::string(surface); }

SlotId install_contact(EnvironmentState& env, std::string_view object, std::string_view surface) {
  const std::size_t obj = env.entity_index(object);
  const std::size_t surf = env.entity_index(surface);
  const std::string name = contact_slot_name(surface);
  if (auto existing = env.find_slot(obj, name)) return *existing;
  if (!env.find_slot(obj, "support")) {
    fail(ErrorCode::ValidationError, std::string(object) + " cannot be placed on anything");
  }
  const SlotId slot = env.add_slot(obj, {name, "", SlotSpace::logical, 0.0});
  const double ref = encode_entity_ref(surf);
  Event ev;
  ev.id = "contact:" + std::string(object) + "@" + std::string(surface);
  ev.owner = std::string(object);
  ev.bindings = {{std::string(object), "support"}, {std::string(object), name}};
  ev.trigger = [ref](const StepContext& ctx) { return (ctx.value(0) == ref) != ctx.flag(1); };
  ev.effect = [ref](EventContext& ctx) { ctx.set_flag(1, ctx.value(0) == ref); };
  register_event(env, std::move(ev));
  return slot;
}

void install_heater(EnvironmentState& env, std::string_view id) {
  require_kind(env, id, EntityKind::heater);
  const std::string owner(id);
  Event ev;
  ev.id = "heater:" + owner;
  ev.owner = owner;
  ev.bindings = {{owner, "heaterOn"}, {owner, "T_target"}};
  ev.trigger = [owner](const StepContext& ctx) { return ctx.actions.find_command(owner, "set") != nullptr; };
  ev.effect = [owner](EventContext& ctx) {
    for (const auto& d : ctx.actions().discrete) {
      if (d.entity != owner || d.command != "set") continue;
      ctx.set_flag(0, d.payload.flag);
      if (d.payload.value > 0.0) ctx.set_value(1, d.payload.value);
    }
  };
  register_event(env, std::move(ev));
}

double scale_read(const EnvironmentState& env, std::string_view id) {
  const std::size_t scale = require_kind(env, id, EntityKind::scale);
  const double ref = encode_entity_ref(scale);
  auto s = env.continuous();
  double total = 0.0;
  for (std::size_t e = 0; e < env.entity_count(); ++e) {
    auto support = env.find_slot(e, "support");
    if (!support || env.value(*support) != ref) continue;
    total += env.parameter(e, "tare_mass", 0.0);
    if (auto m = env.find_mixture(e)) {
      const auto& layout = env.mixtures()[*m];
      const double solvent = s[layout.solvent];
      total += solvent;
      for (std::size_t k = 0; k < env.species().size(); ++k) {
        if (auto mm = env.molar_mass(k)) total += s[layout.first_molality + k] * solvent * *mm * 1e-3;
      }
    }
  }
  return total - env.parameter(scale, "zero_offset", 0.0);
}

void install_scale(EnvironmentState& env, std::string_view id) {
  require_kind(env, id, EntityKind::scale);
  const std::string owner(id);
  Event ev;
  ev.id = "scale:" + owner;
  ev.owner = owner;
  ev.bindings = {{owner, "reading"}};
  ev.trigger = [owner](const StepContext& ctx) { return scale_read(ctx.env, owner) != ctx.value(0); };
  ev.effect = [owner](EventContext& ctx) { ctx.set_value(0, scale_read(ctx.env(), owner)); };
  register_event(env, std::move(ev));
}

double volume_to_mass(const EnvironmentState& env, std::size_t holder, double microlitres) {
  return microlitres * 1e-6 * env.parameter(holder, "density", 1.0);
}

void install_liquid_handler(EnvironmentState& env, std::string_view id) {
  const std::size_t handler = require_kind(env, id, EntityKind::liquid_handler);
  const std::string owner(id);
  const double capacity_ul = env.parameter(handler, "capacity_ul", 300.0);
  if (!(capacity_ul > 0.0)) fail(ErrorCode::NonPositiveParameter, owner + ": capacity_ul");
  const auto tip_solvent = env.mixtures()[env.mixture_index(handler)].solvent;

  // Immersion: the tip is in solution when attached and parked over a well
  // that holds liquid.
  Event immersion;
  immersion.id = "immersion:" + owner;
  immersion.owner = owner;
  immersion.bindings = {{owner, "tip_attached"}, {owner, "well"}, {owner, "tipInSolution"}};
  auto immersed = [](const EnvironmentState& env, double attached, double well_ref) {
    auto well = decode_entity_ref(well_ref);
    if (attached == 0.0 || !well) return false;
    auto m = env.find_mixture(*well);
    return m && env.continuous()[env.mixtures()[*m].solvent] > 0.0;
  };
  immersion.trigger = [immersed](const StepContext& ctx) {
    return immersed(ctx.env, ctx.value(0), ctx.value(1)) != ctx.flag(2);
  };
  immersion.effect = [immersed](EventContext& ctx) {
    ctx.set_flag(2, immersed(ctx.env(), ctx.value(0), ctx.value(1)));
  };
  register_event(env, std::move(immersion));

  Event command;
  command.id = "liquid_handler:" + owner;
  command.owner = owner;
  command.bindings = {{owner, "tipLoaded"},  {owner, "tipInSolution"}, {owner, "tip_attached"},
                      {owner, "well"},       {owner, "disposals"},     {owner, "tips_remaining"}};
  command.trigger = [owner](const StepContext& ctx) {
    for (const auto& d : ctx.actions.discrete) {
      if (d.entity == owner && d.command != "move_to") return true;
    }
    return false;
  };
  command.effect = [owner, handler, capacity_ul, tip_solvent](EventContext& ctx) {
    EnvironmentState& env = ctx.env();
    for (const auto& d : ctx.actions().discrete) {
      if (d.entity != owner) continue;
      if (d.command == "load_tip") {
        if (ctx.flag(0)) precondition_failed(owner, "!tipLoaded");
        if (ctx.value(5) < 1.0) precondition_failed(owner, "tipAvailable");
        ctx.set_flag(0, true);
        ctx.set_value(2, 1.0);
        ctx.set_value(5, ctx.value(5) - 1.0);
      } else if (d.command == "remove_tip") {
        if (!ctx.flag(0)) precondition_failed(owner, "tipLoaded");
        if (env.continuous()[tip_solvent] > 0.0) precondition_failed(owner, "tipEmpty");
        ctx.set_flag(0, false);
        ctx.set_flag(1, false);
        ctx.set_value(2, 0.0);
        ctx.set_value(4, ctx.value(4) + 1.0);
      } else if (d.command == "aspirate") {
        if (!ctx.flag(0)) precondition_failed(owner, "tipLoaded");
        if (!ctx.flag(1)) precondition_failed(owner, "tipInSolution");
        const std::size_t well = *decode_entity_ref(ctx.value(3));
        const double mass = volume_to_mass(env, well, d.payload.value);
        const double capacity = volume_to_mass(env, well, capacity_ul);
        if (env.continuous()[tip_solvent] + mass > capacity * (1.0 + 1e-12)) {
          fail(ErrorCode::CapacityExceeded, owner + ": " + std::to_string(d.payload.value) + " uL");
        }
        transfer_solution(env, well, handler, mass);
      } else if (d.command == "dispense") {
        if (!ctx.flag(0)) precondition_failed(owner, "tipLoaded");
        auto well = decode_entity_ref(ctx.value(3));
        if (!well) precondition_failed(owner, "target");
        transfer_solution(env, handler, *well, volume_to_mass(env, *well, d.payload.value));
      }
    }
  };
  register_event(env, std::move(command));
}

void install_faucet(EnvironmentState& env, const FaucetSpec& spec) {
  require_kind(env, spec.id, EntityKind::faucet);
  const std::size_t target = require_kind(env, spec.target, EntityKind::container);
  if (!(spec.flow_coefficient > 0.0)) fail(ErrorCode::NonPositiveParameter, spec.id + ": flow coefficient");
  if (!(spec.max_angle > 0.0)) fail(ErrorCode::NonPositiveParameter, spec.id + ": max angle");
  const std::string owner = spec.id;
  const double max_angle = spec.max_angle;
  const double c = spec.flow_coefficient;

  Event knob;
  knob.id = "faucet:" + owner;
  knob.owner = owner;
  knob.bindings = {{owner, "angle"}};
  knob.trigger = [owner](const StepContext& ctx) { return ctx.actions.find_command(owner, "set_knob") != nullptr; };
  knob.effect = [owner, max_angle](EventContext& ctx) {
    for (const auto& d : ctx.actions().discrete) {
      if (d.entity == owner && d.command == "set_knob") ctx.set_value(0, std::clamp(d.payload.value, 0.0, max_angle));
    }
  };
  register_event(env, std::move(knob));

  Process flow;
  flow.id = "flow:" + owner;
  flow.owner = owner;
  flow.category = ProcessCategory::device;
  flow.bindings = {{owner, "angle"}, {env.entity(target).id, "solvent_mass"}};
  flow.precondition = [](const StepContext& ctx) -> std::string_view {
    return ctx.value(0) > 0.0 ? std::string_view{} : std::string_view{"knobOpen"};
  };
  flow.contribute = [c](const StepContext& ctx, Derivative& d) { d.add(ctx.binding(1), c * ctx.value(0)); };
  register_process(env, std::move(flow));
}

std::string_view to_string(LiquidHandlerOp op) {
  for (const auto& [o, name] : kOps) {
    if (o == op) return name;
  }
  return "";
}

std::optional<LiquidHandlerOp> parse_liquid_handler_op(std::string_view text) {
  for (const auto& [o, name] : kOps) {
    if (name == text) return o;
  }
  return std::nullopt;
}

DiscreteAction heater_command(const EnvironmentState& env, std::string_view id, bool on, double t_target) {
  require_kind(env, id, EntityKind::heater);
  return {std::string(id), "set", {"", t_target, on}};
}

DiscreteAction liquid_handler_command(const EnvironmentState& env, std::string_view id,
                                      const LiquidHandlerCommand& cmd) {
  require_kind(env, id, EntityKind::liquid_handler);
  DiscreteAction a{std::string(id), std::string(to_string(cmd.op)), {}};
  if (cmd.op == LiquidHandlerOp::move_to) {
    if (!cmd.target.empty()) env.entity_index(cmd.target);
    a.payload.target = cmd.target;
  } else if (cmd.op == LiquidHandlerOp::aspirate || cmd.op == LiquidHandlerOp::dispense) {
    if (!(cmd.volume_ul >= 0.0)) fail(ErrorCode::NegativeMass, std::string(id) + ": volume");
    a.payload.value = cmd.volume_ul;
  }
  return a;
}

DiscreteAction knob_command(const EnvironmentState& env, std::string_view id, double angle) {
  require_kind(env, id, EntityKind::faucet);
  return {std::string(id), "set_knob", {"", angle, false}};
}

DiscreteAction place_command(const EnvironmentState& env, std::string_view object, std::string_view surface) {
  require_kind(env, object, EntityKind::container);
  env.entity_index(surface);
  return {std::string(object), "place", {std::string(surface), 0.0, true}};
}

DiscreteAction pick_command(const EnvironmentState& env, std::string_view object) {
  require_kind(env, object, EntityKind::container);
  return {std::string(object), "pick", {}};
}

}  // namespace labtwin
