#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>

#include "labtwin/scenario.hpp"

namespace labtwin {

namespace {

double time_rollout(const EnvironmentState& prototype, std::size_t n_envs, std::span<const ActionVector> actions,
                    const StepOptions& options) {
  EnvironmentBatch batch = clone_batch(prototype, n_envs);
  const auto t0 = std::chrono::steady_clock::now();
  rollout_batch(batch, actions, options);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

BenchReport bench(const Scenario& scenario, std::size_t n_envs, std::uint64_t steps, unsigned repetitions) {
  if (n_envs == 0) fail(ErrorCode::ZeroCount, "bench requires at least one environment");
  if (steps == 0) fail(ErrorCode::ZeroCount, "bench requires at least one step");
  repetitions = std::max(1u, repetitions);

  RunOptions record;
  record.keep_actions = true;
  record.max_steps = steps;
  record.stride = std::numeric_limits<std::uint64_t>::max();
  const std::vector<ActionVector> actions = run(scenario, record).actions;
  const EnvironmentState prototype = build_environment(scenario);

  BenchReport r;
  r.n_envs = n_envs;
  r.steps = steps;
  r.threads = std::min(batch_threads(), n_envs);
  r.seconds_with = std::numeric_limits<double>::infinity();
  r.seconds_without = std::numeric_limits<double>::infinity();
  // Interleave the two modes so slow drift in machine load hits both.
  for (unsigned i = 0; i < repetitions; ++i) {
    r.seconds_with = std::min(r.seconds_with, time_rollout(prototype, n_envs, actions, {true, scenario.meta.integrator}));
    r.seconds_without =
        std::min(r.seconds_without, time_rollout(prototype, n_envs, actions, {false, scenario.meta.integrator}));
  }
  const double env_steps = static_cast<double>(n_envs) * static_cast<double>(steps);
  r.steps_per_second_with = env_steps / r.seconds_with;
  r.steps_per_second_without = env_steps / r.seconds_without;
  r.overhead = (r.seconds_with - r.seconds_without) / r.seconds_without;
  return r;
}

std::string BenchReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "envs=%zu steps=%llu threads=%zu with=%.6fs without=%.6fs sps_with=%.1f sps_without=%.1f "
                "overhead=%.2f%%",
                n_envs, static_cast<unsigned long long>(steps), threads, seconds_with, seconds_without,
                steps_per_second_with, steps_per_second_without, overhead * 100.0);
  return buf;
}

}  // namespace labtwin
