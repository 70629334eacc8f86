#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "labtwin/action.hpp"
#include "labtwin/state.hpp"

namespace labtwin {

struct SlotKey {
  EntityId entity;
  std::string slot;
};

/// Read-only view handed to preconditions, contributions and triggers.
/// `s` is the continuous state the contribution is evaluated at (start of
/// step for Euler, a stage state for RK4); x and l are read from `env`.
struct StepContext {
  const EnvironmentState& env;
  std::span<const double> s;
  const ActionVector& actions;
  std::span<const SlotId> bindings;

  SlotId binding(std::size_t i) const { return bindings[i]; }
  double value(std::size_t i) const { return read(bindings[i]); }
  bool flag(std::size_t i) const { return read(bindings[i]) != 0.0; }
  double read(SlotId slot) const {
    return slot.space == SlotSpace::continuous ? s[slot.index] : env.value(slot);
  }
};

/// Additive ds/dt accumulator. Contributions never overwrite.
class Derivative {
 public:
  explicit Derivative(std::span<double> rates) : rates_(rates) {}
  void add(SlotId slot, double rate) { rates_[slot.index] += rate; }
  void add_index(std::size_t index, double rate) { rates_[index] += rate; }
  std::span<const double> rates() const noexcept { return rates_; }

 private:
  std::span<double> rates_;
};

enum class ProcessCategory { thermal, kinetics, device, custom };

struct Process {
  std::string id;
  EntityId owner;  // empty: global
  ProcessCategory category = ProcessCategory::custom;
  std::vector<SlotKey> bindings;
  /// Empty string_view means every precondition holds; otherwise the name of
  /// the first one that failed. An unset precondition always holds.
  std::function<std::string_view(const StepContext&)> precondition;
  std::function<void(const StepContext&, Derivative&)> contribute;
};

class EventContext {
 public:
  EventContext(EnvironmentState& env, const ActionVector& actions, std::span<const SlotId> bindings)
      : env_(env), actions_(actions), bindings_(bindings) {}

  EnvironmentState& env() { return env_; }
  const ActionVector& actions() const { return actions_; }
  SlotId binding(std::size_t i) const { return bindings_[i]; }
  double value(std::size_t i) const { return env_.value(bindings_[i]); }
  bool flag(std::size_t i) const { return env_.flag(bindings_[i]); }
  void set_value(std::size_t i, double v) { env_.set_value(bindings_[i], v); }
  void set_flag(std::size_t i, bool on) { env_.set_flag(bindings_[i], on); }
  /// Behaviour swap: turn a registered process on or off from the next step.
  void enable_process(std::string_view id, bool on);

 private:
  EnvironmentState& env_;
  const ActionVector& actions_;
  std::span<const SlotId> bindings_;
};

struct Event {
  std::string id;
  EntityId owner;
  std::vector<SlotKey> bindings;
  std::function<bool(const StepContext&)> trigger;
  std::function<void(EventContext&)> effect;
};

struct Registry {
  std::vector<Process> processes;
  std::vector<std::vector<SlotId>> process_bindings;
  std::unordered_map<std::string, std::size_t> process_index;

  std::vector<Event> events;
  std::vector<std::vector<SlotId>> event_bindings;
  std::unordered_map<std::string, std::size_t> event_index;
};

void register_process(EnvironmentState& env, Process process);
void register_event(EnvironmentState& env, Event event);

std::vector<SlotId> resolve_bindings(const EnvironmentState& env, std::span<const SlotKey> keys);

}  // namespace labtwin
