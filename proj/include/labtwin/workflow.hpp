#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "labtwin/action.hpp"
#include "labtwin/devices.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/state.hpp"

namespace labtwin {

inline constexpr double kDefaultPlaceDuration = 2.0;
inline constexpr double kDefaultPourDuration = 3.0;

struct Wait {
  double duration = 0.0;
};

/// Emits `place` on its last step, so the contact appears when the motion ends.
struct Place {
  EntityId object;
  EntityId surface;
  double duration = kDefaultPlaceDuration;
};

/// Emits `pick` on its first step.
struct Pick {
  EntityId object;
  EntityId surface;
  double duration = kDefaultPlaceDuration;
};

/// Transfers `mass` kg in equal chunks over ceil(duration/dt) steps.
struct Pour {
  EntityId src;
  EntityId dst;
  double mass = 0.0;
  double duration = kDefaultPourDuration;
};

struct HeaterSet {
  EntityId heater;
  bool on = true;
  double t_target = 0.0;  // K; <= 0 keeps the current setpoint
};

struct LiquidHandlerAction {
  EntityId handler;
  LiquidHandlerCommand command;
};

struct ReadScale {
  EntityId scale;
  std::string label;
};

struct SetKnob {
  EntityId faucet;
  double angle = 0.0;
};

using PrimitiveAction = std::variant<Wait, Place, Pick, Pour, HeaterSet, LiquidHandlerAction, ReadScale, SetKnob>;

struct WorkflowNodeSpec {
  std::string id;
  std::vector<std::string> children;
  std::optional<PrimitiveAction> action;
};

struct WorkflowSpec {
  std::string root;
  std::vector<WorkflowNodeSpec> nodes;
};

enum class NodeStatus : std::uint8_t { not_started, running, done, failed };
std::string_view to_string(NodeStatus status);

struct PreconditionFailure {
  double time = 0.0;
  std::string source;  // process id or leaf id
  std::string name;
};

struct Recording {
  double time = 0.0;
  std::string label;
  double value = 0.0;
};

struct TickResult {
  ActionVector actions;
  NodeStatus status = NodeStatus::not_started;
};

/// Sequential depth-first executor: exactly one leaf runs at a time, left to
/// right. Failed is absorbing.
class Workflow {
 public:
  static Workflow build(const EnvironmentState& env, const WorkflowSpec& spec);

  TickResult tick(const EnvironmentState& env);

  /// Completes the running leaf if it has used up its steps, without
  /// starting the next one. Called once the driver stops stepping.
  void settle(const EnvironmentState& env);

  /// Marks the running leaf (and every ancestor) Failed.
  void fail(const EnvironmentState& env, const std::string& cause);

  /// Logs processes that went from active to gated during the last step.
  void observe(const EnvironmentState& env, const StepReport& report);

  NodeStatus status() const { return nodes_[root_].status; }
  NodeStatus status(std::string_view id) const;
  bool terminated() const { return status() == NodeStatus::done || status() == NodeStatus::failed; }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<std::string>& leaf_order() const { return leaf_order_; }
  const std::vector<std::string>& start_order() const { return start_order_; }
  const std::vector<PreconditionFailure>& failures() const { return failures_; }
  const std::vector<Recording>& recordings() const { return recordings_; }
  std::optional<std::string> current_leaf() const;

 private:
  struct Node {
    std::string id;
    std::vector<std::size_t> children;
    std::optional<std::size_t> parent;
    std::optional<PrimitiveAction> action;
    NodeStatus status = NodeStatus::not_started;
  };

  void start_leaf(const EnvironmentState& env);
  void finish_leaf();
  ActionVector emit(const EnvironmentState& env);

  std::vector<Node> nodes_;
  std::size_t root_ = 0;
  std::vector<std::size_t> leaves_;
  std::vector<std::string> leaf_order_;
  std::size_t cursor_ = 0;
  std::uint64_t leaf_steps_ = 0;  // steps the current leaf lasts
  std::uint64_t leaf_tick_ = 0;   // steps already emitted
  std::vector<std::string> start_order_;
  std::vector<PreconditionFailure> failures_;
  std::vector<Recording> recordings_;
  std::vector<std::uint8_t> was_active_;
};

enum class TargetKind { above, at_least, at_most, below_fraction_of_peak };

std::string_view to_string(TargetKind kind);
std::optional<TargetKind> parse_target_kind(std::string_view text);

struct VerificationTarget {
  EntityId container;
  std::string species;
  TargetKind kind = TargetKind::above;
  double threshold = 0.0;
};

struct TargetResult {
  VerificationTarget target;
  double final_molality = 0.0;
  double peak = 0.0;
  bool pass = false;
};

struct VerificationReport {
  bool completed = false;
  std::vector<TargetResult> targets;
  std::vector<PreconditionFailure> failures;

  bool passed() const;
};

/// Running maximum of tracked molalities, fed once per step by the driver.
class PeakTracker {
 public:
  void track(const EnvironmentState& env, const EntityId& container, const std::string& species);
  void update(const EnvironmentState& env);
  double peak(const EntityId& container, const std::string& species) const;

 private:
  struct Entry {
    EntityId container;
    std::string species;
    std::uint32_t slot = 0;
    double peak = 0.0;
  };
  std::vector<Entry> entries_;
};

VerificationReport verify(const EnvironmentState& env, const Workflow& workflow,
                          std::span<const VerificationTarget> targets, const PeakTracker* peaks = nullptr);

}  // namespace labtwin
