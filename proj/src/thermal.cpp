#include "labtwin/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "labtwin/engine.hpp"

namespace labtwin {

namespace {

void require_positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::NonPositiveParameter, what);
}

std::pair<std::string, std::string> split_key(std::string_view key) {
  const auto dot = key.find('.');
  if (dot == std::string_view::npos) return {std::string(key), "T"};
  return {std::string(key.substr(0, dot)), std::string(key.substr(dot + 1))};
}

SlotKey node_slot_key(std::string_view key) {
  auto [entity, slot] = split_key(key);
  return {entity, slot};
}

std::size_t node_record(const EnvironmentState& env, std::string_view key) {
  const SlotId id = thermal_node(env, key);
  return *env.find_thermal_node(id);
}

double inverse_capacity(const EnvironmentState& env, std::size_t node) {
  const auto& rec = env.thermal_nodes()[node];
  return rec.ambient ? 0.0 : 1.0 / rec.heat_capacity;
}

}  // namespace

SlotId add_thermal_node(EnvironmentState& env, std::string_view entity, double mass, double specific_heat,
                        double initial_temperature, std::string_view slot) {
  const std::size_t e = env.entity_index(entity);
  require_positive(mass, std::string(entity) + ": mass");
  require_positive(specific_heat, std::string(entity) + ": specific heat");
  require_positive(initial_temperature, std::string(entity) + ": temperature");
  if (env.find_slot(e, slot)) fail(ErrorCode::DuplicateId, "thermal node " + std::string(entity) + "." + std::string(slot));
  const SlotId id = env.add_slot(e, {std::string(slot), "K", SlotSpace::continuous, initial_temperature});
  env.add_thermal_node_record({static_cast<std::uint32_t>(e), id.index, mass * specific_heat, 0.0, false});
  return id;
}

SlotId add_ambient_node(EnvironmentState& env, std::string_view entity, double temperature, std::string_view slot) {
  const std::size_t e = env.entity_index(entity);
  require_positive(temperature, std::string(entity) + ": ambient temperature");
  if (env.find_slot(e, slot)) fail(ErrorCode::DuplicateId, "thermal node " + std::string(entity) + "." + std::string(slot));
  const SlotId id = env.add_slot(e, {std::string(slot), "K", SlotSpace::continuous, temperature});
  env.add_thermal_node_record({static_cast<std::uint32_t>(e), id.index, 0.0, 0.0, true});
  return id;
}

SlotId thermal_node(const EnvironmentState& env, std::string_view key) {
  auto [entity, slot] = split_key(key);
  auto e = env.find_entity(entity);
  if (!e) fail(ErrorCode::UnknownNode, std::string(key));
  auto id = env.find_slot(*e, slot);
  if (!id || !env.find_thermal_node(*id)) fail(ErrorCode::UnknownNode, std::string(key));
  return *id;
}

void add_link(EnvironmentState& env, const ThermalLink& link) {
  const std::string id =
      link.id.empty() ? "link" + std::to_string(env.registry().processes.size()) : link.id;
  Process proc;
  proc.id = "heat:" + id;
  proc.category = ProcessCategory::thermal;

  std::size_t gate_binding = std::numeric_limits<std::size_t>::max();
  auto add_gate = [&](const SlotKey& key) {
    const SlotId slot = env.slot(env.entity_index(key.entity), key.slot);
    if (slot.space != SlotSpace::logical) fail(ErrorCode::ValidationError, proc.id + ": gate must be a logical slot");
    proc.bindings.push_back(key);
    return proc.bindings.size() - 1;
  };

  if (const auto* c = std::get_if<Conduction>(&link.params)) {
    const std::size_t a = node_record(env, c->a);
    const std::size_t b = node_record(env, c->b);
    if (a == b) fail(ErrorCode::ValidationError, proc.id + ": conduction needs two distinct nodes");
    require_positive(c->conductivity, proc.id + ": k");
    require_positive(c->area, proc.id + ": A");
    require_positive(c->thickness, proc.id + ": d");
    const double g = c->conductivity * c->area / c->thickness;
    const double inv_a = inverse_capacity(env, a);
    const double inv_b = inverse_capacity(env, b);
    proc.bindings = {node_slot_key(c->a), node_slot_key(c->b)};
    proc.contribute = [g, inv_a, inv_b](const StepContext& ctx, Derivative& d) {
      const double q = g * (ctx.value(0) - ctx.value(1));
      d.add(ctx.binding(0), -q * inv_a);
      d.add(ctx.binding(1), q * inv_b);
    };
    env.add_node_conductance(a, g);
    env.add_node_conductance(b, g);
  } else if (const auto* v = std::get_if<Convection>(&link.params)) {
    const std::size_t n = node_record(env, v->node);
    const std::size_t amb = node_record(env, v->ambient);
    if (!env.thermal_nodes()[amb].ambient) fail(ErrorCode::ValidationError, proc.id + ": " + v->ambient + " is not ambient");
    require_positive(v->h, proc.id + ": h");
    require_positive(v->area, proc.id + ": A");
    const double g = v->h * v->area;
    const double inv = inverse_capacity(env, n);
    proc.bindings = {node_slot_key(v->node), node_slot_key(v->ambient)};
    proc.contribute = [g, inv](const StepContext& ctx, Derivative& d) {
      d.add(ctx.binding(0), -g * (ctx.value(0) - ctx.value(1)) * inv);
    };
    env.add_node_conductance(n, g);
  } else {
    const auto& gen = std::get<Generation>(link.params);
    const std::size_t heater = env.entity_index(gen.heater);
    if (env.entity(heater).kind != EntityKind::heater) fail(ErrorCode::ValidationError, proc.id + ": " + gen.heater + " is not a heater");
    const std::string node_key = gen.node.empty() ? gen.heater : gen.node;
    const std::size_t n = node_record(env, node_key);
    require_positive(gen.gain, proc.id + ": K_gen");
    const double inv = inverse_capacity(env, n);
    const double k = gen.gain;
    proc.owner = gen.heater;
    proc.bindings = {node_slot_key(node_key), {gen.heater, "T_target"}, {gen.heater, "heaterOn"}};
    proc.contribute = [k, inv](const StepContext& ctx, Derivative& d) {
      d.add(ctx.binding(0), k * (ctx.value(1) - ctx.value(0)) * inv);
    };
    env.add_node_conductance(n, k);
  }

  if (link.gate) gate_binding = add_gate(*link.gate);
  const bool generation = std::holds_alternative<Generation>(link.params);
  if (generation || gate_binding != std::numeric_limits<std::size_t>::max()) {
    proc.precondition = [generation, gate_binding](const StepContext& ctx) -> std::string_view {
      if (generation && !ctx.flag(2)) return "heaterOn";
      if (gate_binding != std::numeric_limits<std::size_t>::max() && !ctx.flag(gate_binding)) return "contact";
      return {};
    };
  }
  register_process(env, std::move(proc));
}

double link_heat_flow(const EnvironmentState& env, const ThermalLink& link) {
  if (link.gate && !env.flag(env.slot(link.gate->entity, link.gate->slot))) return 0.0;
  if (const auto* c = std::get_if<Conduction>(&link.params)) {
    return c->conductivity * c->area / c->thickness *
           (env.value(thermal_node(env, c->a)) - env.value(thermal_node(env, c->b)));
  }
  if (const auto* v = std::get_if<Convection>(&link.params)) {
    return v->h * v->area * (env.value(thermal_node(env, v->node)) - env.value(thermal_node(env, v->ambient)));
  }
  const auto& gen = std::get<Generation>(link.params);
  if (!env.flag(env.slot(gen.heater, "heaterOn"))) return 0.0;
  const std::string node = gen.node.empty() ? gen.heater : gen.node;
  return gen.gain * (env.value(env.slot(gen.heater, "T_target")) - env.value(thermal_node(env, node)));
}

std::vector<double> thermal_process(const EnvironmentState& env) {
  const ProcessCategory category = ProcessCategory::thermal;
  return evaluate_rates(env, ActionVector{}, &category);
}

double thermal_energy(const EnvironmentState& env) {
  double sum = 0.0;
  for (const auto& node : env.thermal_nodes()) {
    if (!node.ambient) sum += node.heat_capacity * env.continuous()[node.temperature];
  }
  return sum;
}

double stable_dt_limit(const EnvironmentState& env) {
  double limit = std::numeric_limits<double>::infinity();
  for (const auto& node : env.thermal_nodes()) {
    if (node.ambient || node.conductance <= 0.0) continue;
    limit = std::min(limit, 2.0 * node.heat_capacity / node.conductance);
  }
  return limit;
}

double biot_number(double h, double k, double volume, double area) {
  require_positive(h, "h");
  require_positive(k, "k");
  require_positive(volume, "volume");
  require_positive(area, "area");
  return h * (volume / area) / k;
}

std::string_view to_string(ConvectionRegime regime) {
  switch (regime) {
    case ConvectionRegime::conduction_dominated: return "conduction-dominated";
    case ConvectionRegime::transition: return "transition";
    case ConvectionRegime::convection_dominated: return "convection-dominated";
  }
  return "";
}

RayleighResult rayleigh_number(double g, double beta, double delta_t, double length, double nu, double alpha) {
  require_positive(nu, "nu");
  require_positive(alpha, "alpha");
  require_positive(length, "L");
  RayleighResult r;
  r.grashof = g * beta * delta_t * length * length * length / (nu * nu);
  r.prandtl = nu / alpha;
  r.rayleigh = r.grashof * r.prandtl;
  if (r.rayleigh < 1e3) {
    r.regime = ConvectionRegime::conduction_dominated;
  } else if (r.rayleigh <= 1e5) {
    r.regime = ConvectionRegime::transition;
  } else {
    r.regime = ConvectionRegime::convection_dominated;
  }
  return r;
}

}  // namespace labtwin
