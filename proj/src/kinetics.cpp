#include "labtwin/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "labtwin/engine.hpp"
#include "labtwin/process.hpp"

namespace labtwin {

double Mixture::molality_of(const std::string& species) const {
  auto it = molality.find(species);
  return it == molality.end() ? 0.0 : it->second;
}

Mixture make_mixture(double solvent_mass, std::span<const Solute> solutes) {
  if (!(solvent_mass > 0.0)) fail(ErrorCode::NonPositiveSolvent, "solvent mass must be positive");
  Mixture mix;
  mix.solvent_mass = solvent_mass;
  for (const auto& s : solutes) {
    if (s.moles < 0.0) fail(ErrorCode::NegativeMoles, s.species);
    mix.molality[s.species] += s.moles / solvent_mass;
  }
  return mix;
}

namespace {

// Shared mass balance: moved moles = molality * mass, destination molality
// recomputed on the enlarged solvent basis. Source molality is unchanged
// because solvent and solutes leave in the same proportion.
struct TransferResult {
  double src_solvent;
  double dst_solvent;
};

double checked_amount(double available, double mass) {
  if (mass < 0.0 || std::isnan(mass)) fail(ErrorCode::NegativeMass, "transfer mass must be >= 0");
  // Linear partitioning of a pour over many steps can overshoot by rounding.
  const double slack = 1e-12 * std::max(available, 1e-12);
  if (mass > available + slack) {
    fail(ErrorCode::Overdraw, "requested " + std::to_string(mass) + " kg from " + std::to_string(available) + " kg");
  }
  return std::min(mass, available);
}

}  // namespace

std::pair<Mixture, Mixture> pour(const Mixture& src, const Mixture& dst, double mass) {
  const double amount = checked_amount(src.solvent_mass, mass);
  if (amount == 0.0) return {src, dst};
  Mixture out_src = src;
  Mixture out_dst = dst;
  const bool emptied = amount == src.solvent_mass;
  out_src.solvent_mass = emptied ? 0.0 : src.solvent_mass - amount;
  out_dst.solvent_mass = dst.solvent_mass + amount;
  std::map<std::string, double> keys = src.molality;
  keys.insert(dst.molality.begin(), dst.molality.end());
  for (const auto& [species, unused] : keys) {
    const double moved = src.molality_of(species) * amount;
    out_dst.molality[species] = (dst.molality_of(species) * dst.solvent_mass + moved) / out_dst.solvent_mass;
    if (emptied && out_src.molality.count(species)) out_src.molality[species] = 0.0;
  }
  return {out_src, out_dst};
}

void transfer_solution(EnvironmentState& env, std::size_t src_entity, std::size_t dst_entity, double mass) {
  if (src_entity == dst_entity) fail(ErrorCode::ValidationError, "transfer into the same holder");
  const auto& src = env.mixtures()[env.mixture_index(src_entity)];
  const auto& dst = env.mixtures()[env.mixture_index(dst_entity)];
  auto s = env.continuous_mut();
  const double src_solvent = s[src.solvent];
  const double amount = checked_amount(src_solvent, mass);
  if (amount == 0.0) return;
  const bool emptied = amount == src_solvent;
  const double dst_before = s[dst.solvent];
  const double dst_after = dst_before + amount;
  for (std::size_t k = 0; k < env.species().size(); ++k) {
    double& c_src = s[src.first_molality + k];
    double& c_dst = s[dst.first_molality + k];
    c_dst = (c_dst * dst_before + c_src * amount) / dst_after;
    if (emptied) c_src = 0.0;
  }
  s[src.solvent] = emptied ? 0.0 : src_solvent - amount;
  s[dst.solvent] = dst_after;
}

void validate_template(const ReactionTemplate& tpl) {
  if (tpl.id.empty()) fail(ErrorCode::ValidationError, "reaction id must not be empty");
  if (tpl.reactants.empty()) fail(ErrorCode::ValidationError, "reaction " + tpl.id + " has no reactants");
  for (const auto& r : tpl.reactants) {
    if (r.coefficient < 1) fail(ErrorCode::ValidationError, tpl.id + ": coefficient of " + r.species + " < 1");
    if (!(r.order >= 0.0)) fail(ErrorCode::ValidationError, tpl.id + ": negative order for " + r.species);
  }
  for (const auto& p : tpl.products) {
    if (p.coefficient < 1) fail(ErrorCode::ValidationError, tpl.id + ": coefficient of " + p.species + " < 1");
  }
  if (const auto* c = std::get_if<ConstantK>(&tpl.kinetics)) {
    if (!(c->k >= 0.0)) fail(ErrorCode::NonPositiveParameter, tpl.id + ": k must be >= 0");
  } else {
    const auto& a = std::get<Arrhenius>(tpl.kinetics);
    if (!(a.A > 0.0)) fail(ErrorCode::NonPositiveA, tpl.id);
    if (!(a.Ea >= 0.0)) fail(ErrorCode::NonPositiveParameter, tpl.id + ": Ea must be >= 0");
  }
  if (!(tpl.arrhenius_clamp.min > 0.0) || tpl.arrhenius_clamp.max < tpl.arrhenius_clamp.min) {
    fail(ErrorCode::ValidationError, tpl.id + ": invalid Arrhenius clamp range");
  }
  if (tpl.temperature_window && tpl.temperature_window->max < tpl.temperature_window->min) {
    fail(ErrorCode::ValidationError, tpl.id + ": invalid temperature window");
  }
}

double arrhenius_k(double A, double Ea, double T, const TemperatureRange& clamp) {
  if (!(A > 0.0)) fail(ErrorCode::NonPositiveA, "pre-exponential factor must be positive");
  const double t = std::clamp(T, clamp.min, clamp.max);
  return A * std::exp(-Ea / (kGasConstant * t));
}

double rate_constant(const ReactionTemplate& tpl, double T) {
  if (const auto* c = std::get_if<ConstantK>(&tpl.kinetics)) return c->k;
  const auto& a = std::get<Arrhenius>(tpl.kinetics);
  return arrhenius_k(a.A, a.Ea, T, tpl.arrhenius_clamp);
}

double reaction_rate(const ReactionTemplate& tpl, const Mixture& mix, double T) {
  if (tpl.temperature_window && !tpl.temperature_window->contains(T)) return 0.0;
  double rate = rate_constant(tpl, T);
  for (const auto& r : tpl.reactants) {
    const double c = mix.molality_of(r.species);
    if (!(c > 0.0)) return 0.0;
    rate *= std::pow(c, r.order);
  }
  return rate;
}

std::map<std::string, double> species_rates(const ReactionTemplate& tpl, const Mixture& mix, double T) {
  const double rate = reaction_rate(tpl, mix, T);
  std::map<std::string, double> out;
  for (const auto& r : tpl.reactants) out[r.species] -= r.coefficient * rate;
  for (const auto& p : tpl.products) out[p.species] += p.coefficient * rate;
  return out;
}

Mixture read_mixture(const EnvironmentState& env, std::string_view holder) {
  const auto& layout = env.mixtures()[env.mixture_index(env.entity_index(holder))];
  Mixture mix;
  mix.solvent_mass = env.continuous()[layout.solvent];
  for (std::size_t k = 0; k < env.species().size(); ++k) {
    mix.molality[env.species()[k]] = env.continuous()[layout.first_molality + k];
  }
  return mix;
}

void write_mixture(EnvironmentState& env, std::string_view holder, const Mixture& mix) {
  const auto& layout = env.mixtures()[env.mixture_index(env.entity_index(holder))];
  if (mix.solvent_mass < 0.0) fail(ErrorCode::NegativeMass, std::string(holder));
  auto s = env.continuous_mut();
  s[layout.solvent] = mix.solvent_mass;
  for (std::size_t k = 0; k < env.species().size(); ++k) s[layout.first_molality + k] = 0.0;
  for (const auto& [species, c] : mix.molality) {
    if (c < 0.0) fail(ErrorCode::NegativeMoles, std::string(holder) + "." + species);
    s[layout.first_molality + env.species_index(species)] = c;
  }
}

double molality(const EnvironmentState& env, std::string_view holder, std::string_view species) {
  const auto& layout = env.mixtures()[env.mixture_index(env.entity_index(holder))];
  return env.continuous()[layout.first_molality + env.species_index(species)];
}

double total_moles(const EnvironmentState& env, std::string_view species) {
  const std::size_t k = env.species_index(species);
  double sum = 0.0;
  for (const auto& layout : env.mixtures()) {
    sum += env.continuous()[layout.first_molality + k] * env.continuous()[layout.solvent];
  }
  return sum;
}

double total_solvent(const EnvironmentState& env) {
  double sum = 0.0;
  for (const auto& layout : env.mixtures()) sum += env.continuous()[layout.solvent];
  return sum;
}

namespace {

constexpr double kDefaultSolutionTemperature = 298.15;

// Index into s of the temperature kinetics should read for `container`, or
// nullopt when a fixed default applies.
std::optional<std::uint32_t> temperature_source(const EnvironmentState& env, std::size_t container) {
  if (auto t = env.find_slot(container, "T")) {
    if (t->space == SlotSpace::continuous) return t->index;
  }
  for (const auto& node : env.thermal_nodes()) {
    if (node.ambient) return node.temperature;
  }
  return std::nullopt;
}

struct CompiledReaction {
  ReactionTemplate tpl;
  std::uint32_t first_molality = 0;
  std::optional<std::uint32_t> temperature;
  std::vector<std::uint32_t> reactant_slots;
  std::vector<std::string> reactant_reasons;
  std::vector<std::uint32_t> product_slots;

  double temperature_at(std::span<const double> s) const {
    return temperature ? s[*temperature] : kDefaultSolutionTemperature;
  }
};

}  // namespace

double solution_temperature(const EnvironmentState& env, std::size_t container) {
  auto t = temperature_source(env, container);
  return t ? env.continuous()[*t] : kDefaultSolutionTemperature;
}

void register_reaction(EnvironmentState& env, const ReactionTemplate& tpl) {
  validate_template(tpl);
  for (const auto& r : tpl.reactants) env.species_index(r.species);
  for (const auto& p : tpl.products) env.species_index(p.species);

  std::vector<std::size_t> targets;
  if (tpl.containers.empty()) {
    for (const auto& layout : env.mixtures()) {
      if (env.entity(layout.owner).kind == EntityKind::container) targets.push_back(layout.owner);
    }
  } else {
    for (const auto& id : tpl.containers) {
      const std::size_t e = env.entity_index(id);
      if (env.entity(e).kind != EntityKind::container) {
        fail(ErrorCode::ValidationError, tpl.id + ": " + id + " is not a container");
      }
      targets.push_back(e);
    }
  }

  for (std::size_t container : targets) {
    auto compiled = std::make_shared<CompiledReaction>();
    compiled->tpl = tpl;
    const auto& layout = env.mixtures()[env.mixture_index(container)];
    compiled->first_molality = layout.first_molality;
    compiled->temperature = temperature_source(env, container);
    for (const auto& r : tpl.reactants) {
      compiled->reactant_slots.push_back(layout.first_molality + env.species_index(r.species));
      compiled->reactant_reasons.push_back("reactant:" + r.species);
    }
    for (const auto& p : tpl.products) {
      compiled->product_slots.push_back(layout.first_molality + env.species_index(p.species));
    }

    Process proc;
    proc.id = "reaction:" + tpl.id + "@" + env.entity(container).id;
    proc.owner = env.entity(container).id;
    proc.category = ProcessCategory::kinetics;
    proc.precondition = [compiled](const StepContext& ctx) -> std::string_view {
      for (std::size_t i = 0; i < compiled->reactant_slots.size(); ++i) {
        if (!(ctx.s[compiled->reactant_slots[i]] > 0.0)) return compiled->reactant_reasons[i];
      }
      const auto& window = compiled->tpl.temperature_window;
      if (window && !window->contains(compiled->temperature_at(ctx.s))) return "temperature_range";
      return {};
    };
    proc.contribute = [compiled](const StepContext& ctx, Derivative& d) {
      const auto& t = compiled->tpl;
      double rate = rate_constant(t, compiled->temperature_at(ctx.s));
      for (std::size_t i = 0; i < t.reactants.size(); ++i) {
        // RK4 stages may dip below zero; the rate law is defined on [X] >= 0.
        const double c = std::max(0.0, ctx.s[compiled->reactant_slots[i]]);
        rate *= t.reactants[i].order == 1.0 ? c : std::pow(c, t.reactants[i].order);
      }
      for (std::size_t i = 0; i < t.reactants.size(); ++i) {
        d.add_index(compiled->reactant_slots[i], -t.reactants[i].coefficient * rate);
      }
      for (std::size_t i = 0; i < t.products.size(); ++i) {
        d.add_index(compiled->product_slots[i], t.products[i].coefficient * rate);
      }
    };
    register_process(env, std::move(proc));
  }
}

std::vector<double> kinetics_process(const EnvironmentState& env) {
  const ProcessCategory category = ProcessCategory::kinetics;
  return evaluate_rates(env, ActionVector{}, &category);
}

}  // namespace labtwin
