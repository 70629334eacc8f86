#include "labtwin/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "labtwin/kinetics.hpp"

namespace labtwin {

namespace {

constexpr std::array<std::string_view, 1> kContainerChannels{"pour"};
constexpr std::array<std::string_view, 2> kContainerCommands{"place", "pick"};
constexpr std::array<std::string_view, 1> kHeaterCommands{"set"};
constexpr std::array<std::string_view, 5> kHandlerCommands{"load_tip", "remove_tip", "move_to", "aspirate",
                                                          "dispense"};
constexpr std::array<std::string_view, 1> kFaucetCommands{"set_knob"};

bool contains(std::span<const std::string_view> names, std::string_view name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

std::span<const std::string_view> continuous_channels(EntityKind kind) {
  if (kind == EntityKind::container) return kContainerChannels;
  return {};
}

std::span<const std::string_view> discrete_commands(EntityKind kind) {
  switch (kind) {
    case EntityKind::container: return kContainerCommands;
    case EntityKind::heater: return kHeaterCommands;
    case EntityKind::liquid_handler: return kHandlerCommands;
    case EntityKind::faucet: return kFaucetCommands;
    default: return {};
  }
}

const DiscreteAction* ActionVector::find_command(std::string_view entity, std::string_view command) const {
  for (const auto& d : discrete) {
    if (d.entity == entity && d.command == command) return &d;
  }
  return nullptr;
}

const ContinuousAction* ActionVector::find_channel(std::string_view entity, std::string_view channel) const {
  for (const auto& c : continuous) {
    if (c.entity == entity && c.channel == channel) return &c;
  }
  return nullptr;
}

void validate_actions(const EnvironmentState& env, const ActionVector& actions) {
  for (const auto& c : actions.continuous) {
    const auto& spec = env.entity(env.entity_index(c.entity));
    if (!contains(continuous_channels(spec.kind), c.channel)) {
      fail(ErrorCode::UnknownChannel, c.entity + "/" + c.channel);
    }
    if (!c.target.empty()) env.entity_index(c.target);
  }
  for (const auto& d : actions.discrete) {
    const auto& spec = env.entity(env.entity_index(d.entity));
    if (!contains(discrete_commands(spec.kind), d.command)) {
      fail(ErrorCode::UnknownChannel, d.entity + "/" + d.command);
    }
    if (!d.payload.target.empty()) env.entity_index(d.payload.target);
  }
}

std::string_view to_string(ClampReason reason) {
  switch (reason) {
    case ClampReason::negative_concentration: return "negative concentration";
    case ClampReason::negative_mass: return "negative mass";
  }
  return "";
}

bool StepReport::process_active(std::uint32_t index) const {
  return std::find(active_processes.begin(), active_processes.end(), index) != active_processes.end();
}

std::vector<SlotId> resolve_bindings(const EnvironmentState& env, std::span<const SlotKey> keys) {
  std::vector<SlotId> out;
  out.reserve(keys.size());
  for (const auto& key : keys) out.push_back(env.slot(env.entity_index(key.entity), key.slot));
  return out;
}

void register_process(EnvironmentState& env, Process process) {
  env.require_not_started("process " + process.id);
  if (env.registry().process_index.count(process.id)) fail(ErrorCode::DuplicateId, "process " + process.id);
  if (!process.owner.empty()) env.entity_index(process.owner);
  auto bindings = resolve_bindings(env, process.bindings);
  if (!process.contribute) fail(ErrorCode::ValidationError, "process " + process.id + " has no contribution");
  auto& reg = env.registry_mut();
  reg.process_index.emplace(process.id, reg.processes.size());
  reg.processes.push_back(std::move(process));
  reg.process_bindings.push_back(std::move(bindings));
  env.append_process_flag();
}

void register_event(EnvironmentState& env, Event event) {
  env.require_not_started("event " + event.id);
  if (env.registry().event_index.count(event.id)) fail(ErrorCode::DuplicateId, "event " + event.id);
  if (!event.owner.empty()) env.entity_index(event.owner);
  auto bindings = resolve_bindings(env, event.bindings);
  if (!event.trigger || !event.effect) fail(ErrorCode::ValidationError, "event " + event.id + " is incomplete");
  auto& reg = env.registry_mut();
  reg.event_index.emplace(event.id, reg.events.size());
  reg.events.push_back(std::move(event));
  reg.event_bindings.push_back(std::move(bindings));
  env.append_event_flag();
}

void EventContext::enable_process(std::string_view id, bool on) {
  const auto& index = env_.registry().process_index;
  auto it = index.find(std::string(id));
  if (it == index.end()) fail(ErrorCode::ValidationError, "unknown process " + std::string(id));
  env_.set_process_enabled(it->second, on);
}

void apply_kinematics(EnvironmentState& env, const ActionVector& actions) {
  for (const auto& d : actions.discrete) {
    const std::size_t entity = env.entity_index(d.entity);
    const EntityKind kind = env.entity(entity).kind;
    if (kind == EntityKind::container && d.command == "place") {
      env.set_value(env.slot(entity, "support"), encode_entity_ref(env.entity_index(d.payload.target)));
    } else if (kind == EntityKind::container && d.command == "pick") {
      env.set_value(env.slot(entity, "support"), encode_entity_ref(std::nullopt));
    } else if (kind == EntityKind::liquid_handler && d.command == "move_to") {
      std::optional<std::size_t> target;
      if (!d.payload.target.empty()) target = env.entity_index(d.payload.target);
      env.set_value(env.slot(entity, "well"), encode_entity_ref(target));
    }
  }
  for (const auto& c : actions.continuous) {
    if (c.channel == "pour") {
      transfer_solution(env, env.entity_index(c.entity), env.entity_index(c.target), c.value);
    }
  }
}

namespace {

struct Scratch {
  EnvironmentState::Mutable snapshot;
  std::vector<double> start;
  std::vector<double> rates;
  std::vector<double> stage;
  std::array<std::vector<double>, 4> k;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

void accumulate(const EnvironmentState& env, std::span<const double> state, const ActionVector& actions,
                std::span<const std::uint32_t> active, std::vector<double>& rates) {
  rates.assign(state.size(), 0.0);
  Derivative deriv(rates);
  const auto& reg = env.registry();
  for (auto p : active) {
    StepContext ctx{env, state, actions, reg.process_bindings[p]};
    reg.processes[p].contribute(ctx, deriv);
  }
}

void integrate(EnvironmentState& env, const ActionVector& actions, std::span<const std::uint32_t> active,
               Integrator integrator, Scratch& sc) {
  const double dt = env.dt();
  auto s = env.continuous_mut();
  sc.start.assign(s.begin(), s.end());
  if (integrator == Integrator::euler) {
    accumulate(env, sc.start, actions, active, sc.rates);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = sc.start[i] + dt * sc.rates[i];
    return;
  }
  const std::array<double, 4> offset{0.0, 0.5 * dt, 0.5 * dt, dt};
  for (int stage = 0; stage < 4; ++stage) {
    sc.stage.assign(sc.start.begin(), sc.start.end());
    if (stage > 0) {
      for (std::size_t i = 0; i < s.size(); ++i) sc.stage[i] += offset[stage] * sc.k[stage - 1][i];
    }
    accumulate(env, sc.stage, actions, active, sc.k[stage]);
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = sc.start[i] + dt / 6.0 * (sc.k[0][i] + 2.0 * sc.k[1][i] + 2.0 * sc.k[2][i] + sc.k[3][i]);
  }
}

// Solvent inflow/outflow from processes changes the basis of every molality
// in that mixture: moles are carried over, then concentrations are clamped.
void settle_mixtures(EnvironmentState& env, std::span<const double> start, StepReport& report) {
  auto s = env.continuous_mut();
  const std::size_t n_species = env.species().size();
  for (const auto& mix : env.mixtures()) {
    double& solvent = s[mix.solvent];
    const double before = start[mix.solvent];
    if (solvent < 0.0) {
      solvent = 0.0;
      report.clamps.push_back({{SlotSpace::continuous, mix.solvent}, ClampReason::negative_mass});
    }
    if (solvent != before) {
      for (std::size_t k = 0; k < n_species; ++k) {
        double& c = s[mix.first_molality + k];
        c = solvent > 0.0 ? c * before / solvent : 0.0;
      }
    }
    for (std::size_t k = 0; k < n_species; ++k) {
      double& c = s[mix.first_molality + k];
      if (c < 0.0) {
        c = 0.0;
        report.clamps.push_back({{SlotSpace::continuous, static_cast<std::uint32_t>(mix.first_molality + k)},
                                 ClampReason::negative_concentration});
      }
    }
  }
}

void check_finite(const EnvironmentState& env) {
  for (std::size_t i = 0; i < env.continuous().size(); ++i) {
    if (!std::isfinite(env.continuous()[i])) {
      const auto& info = env.slot_info({SlotSpace::continuous, static_cast<std::uint32_t>(i)});
      fail(ErrorCode::NonFiniteState, env.entity(info.owner).id + "." + info.name);
    }
  }
  for (std::size_t i = 0; i < env.kinematic().size(); ++i) {
    if (!std::isfinite(env.kinematic()[i])) {
      const auto& info = env.slot_info({SlotSpace::kinematic, static_cast<std::uint32_t>(i)});
      fail(ErrorCode::NonFiniteState, env.entity(info.owner).id + "." + info.name);
    }
  }
}

StepReport step_impl(EnvironmentState& env, const ActionVector& actions, const StepOptions& options) {
  StepReport report;
  const auto& reg = env.registry();

  // (1) kinematic proxy: x_{t+1} = F_t(x_t, a_t)
  apply_kinematics(env, actions);

  if (options.semantics) {
    // (2) processes: s_{t+1} = P_t(x_{t+1}, s_t, l_t, a_t)
    Scratch& sc = scratch();
    std::vector<std::uint32_t> active;
    {
      auto s = env.continuous();
      for (std::uint32_t p = 0; p < reg.processes.size(); ++p) {
        if (!env.process_enabled(p)) continue;
        const auto& proc = reg.processes[p];
        std::string_view reason;
        if (proc.precondition) {
          StepContext ctx{env, s, actions, reg.process_bindings[p]};
          reason = proc.precondition(ctx);
        }
        if (reason.empty()) {
          active.push_back(p);
        } else {
          report.gated_processes.push_back({p, reason});
        }
      }
    }
    integrate(env, actions, active, options.integrator, sc);
    settle_mixtures(env, sc.start, report);
    report.active_processes = std::move(active);

    // (3) events: l_{t+1}, F_{t+1}, P_{t+1} = E(x_{t+1}, s_{t+1}, l_t, a_t)
    for (std::uint32_t e = 0; e < reg.events.size(); ++e) {
      if (!env.event_enabled(e)) continue;
      const auto& event = reg.events[e];
      StepContext ctx{env, env.continuous(), actions, reg.event_bindings[e]};
      if (!event.trigger(ctx)) continue;
      EventContext ectx(env, actions, reg.event_bindings[e]);
      event.effect(ectx);
      report.fired_events.push_back(e);
    }
  }

  check_finite(env);
  env.advance_clock();
  return report;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(batch_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

StepReport step_validated(EnvironmentState& env, const ActionVector& actions, const StepOptions& options) {
  Scratch& sc = scratch();
  sc.snapshot = env.mutable_state();
  try {
    return step_impl(env, actions, options);
  } catch (...) {
    env.restore(scratch().snapshot);
    throw;
  }
}

}  // namespace

StepReport step(EnvironmentState& env, const ActionVector& actions, const StepOptions& options) {
  validate_actions(env, actions);
  return step_validated(env, actions, options);
}

std::vector<double> evaluate_rates(const EnvironmentState& env, const ActionVector& actions,
                                   const ProcessCategory* category) {
  const auto& reg = env.registry();
  std::vector<std::uint32_t> active;
  for (std::uint32_t p = 0; p < reg.processes.size(); ++p) {
    if (!env.process_enabled(p)) continue;
    if (category && reg.processes[p].category != *category) continue;
    if (reg.processes[p].precondition) {
      StepContext ctx{env, env.continuous(), actions, reg.process_bindings[p]};
      if (!reg.processes[p].precondition(ctx).empty()) continue;
    }
    active.push_back(p);
  }
  std::vector<double> rates;
  accumulate(env, env.continuous(), actions, active, rates);
  return rates;
}

std::size_t batch_threads() {
  if (const char* env = std::getenv("LABTWIN_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<StepReport> step_batch(EnvironmentBatch& batch, std::span<const ActionVector> actions,
                                   const StepOptions& options) {
  if (actions.size() != batch.size()) {
    fail(ErrorCode::LengthMismatch,
         std::to_string(actions.size()) + " action vectors for " + std::to_string(batch.size()) + " environments");
  }
  std::vector<StepReport> reports(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { reports[i] = step(batch[i], actions[i], options); });
  return reports;
}

void rollout_batch(EnvironmentBatch& batch, std::span<const ActionVector> actions, const StepOptions& options) {
  if (batch.size() == 0) return;
  // Clones share one entity registry, so validating against the first
  // environment covers all of them.
  for (const auto& a : actions) validate_actions(batch[0], a);
  parallel_for(batch.size(), [&](std::size_t i) {
    for (const auto& a : actions) step_validated(batch[i], a, options);
  });
}

}  // namespace labtwin
