#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "labtwin/action.hpp"
#include "labtwin/process.hpp"
#include "labtwin/state.hpp"

namespace labtwin {

enum class Integrator { euler, rk4 };

struct StepOptions {
  /// false: kinematic proxy only (processes and events skipped). Used by the
  /// benchmark to time the physics-only baseline.
  bool semantics = true;
  Integrator integrator = Integrator::euler;
};

enum class ClampReason { negative_concentration, negative_mass };

struct Clamp {
  SlotId slot;
  ClampReason reason = ClampReason::negative_concentration;
  friend bool operator==(const Clamp&, const Clamp&) = default;
};

struct GatedProcess {
  std::uint32_t process = 0;
  std::string_view reason;
  friend bool operator==(const GatedProcess&, const GatedProcess&) = default;
};

/// Pure observation of what one step did. Indices refer to the registry.
struct StepReport {
  std::vector<std::uint32_t> fired_events;
  std::vector<std::uint32_t> active_processes;
  std::vector<GatedProcess> gated_processes;
  std::vector<Clamp> clamps;

  bool process_active(std::uint32_t index) const;
  friend bool operator==(const StepReport&, const StepReport&) = default;
};

std::string_view to_string(ClampReason reason);

/// y(t+1) = G(y, a): kinematic proxy update, then the process phase (one
/// explicit step from start-of-step s), then events in registration order.
/// On any error the environment is rolled back to its start-of-step state.
StepReport step(EnvironmentState& env, const ActionVector& actions, const StepOptions& options = {});

std::vector<StepReport> step_batch(EnvironmentBatch& batch, std::span<const ActionVector> actions,
                                   const StepOptions& options = {});

/// Runs `steps` steps on every environment, feeding actions[t] to all of
/// them at step t. Environments are distributed across worker threads.
void rollout_batch(EnvironmentBatch& batch, std::span<const ActionVector> actions, const StepOptions& options = {});

/// Sum of the contributions of active, enabled processes (optionally only
/// those of one category) evaluated at the current state.
std::vector<double> evaluate_rates(const EnvironmentState& env, const ActionVector& actions,
                                   const ProcessCategory* category = nullptr);

/// Worker count for batch stepping: LABTWIN_THREADS if set, otherwise the
/// hardware concurrency.
std::size_t batch_threads();

/// Applies the kinematic side effects of `actions` (contact, containment,
/// in-flight transfers, pipette motion).
void apply_kinematics(EnvironmentState& env, const ActionVector& actions);

}  // namespace labtwin
