#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labtwin/state.hpp"

namespace labtwin {

struct ContinuousAction {
  EntityId entity;
  std::string channel;
  double value = 0.0;
  /// Counterpart entity for channels that move material (e.g. pour target).
  EntityId target;

  friend bool operator==(const ContinuousAction&, const ContinuousAction&) = default;
};

struct Payload {
  EntityId target;
  double value = 0.0;
  bool flag = false;

  friend bool operator==(const Payload&, const Payload&) = default;
};

struct DiscreteAction {
  EntityId entity;
  std::string command;
  Payload payload;

  friend bool operator==(const DiscreteAction&, const DiscreteAction&) = default;
};

/// a(t): what the controller asks of the world for one step.
struct ActionVector {
  std::vector<ContinuousAction> continuous;
  std::vector<DiscreteAction> discrete;

  bool empty() const noexcept { return continuous.empty() && discrete.empty(); }
  const DiscreteAction* find_command(std::string_view entity, std::string_view command) const;
  const ContinuousAction* find_channel(std::string_view entity, std::string_view channel) const;

  friend bool operator==(const ActionVector&, const ActionVector&) = default;
};

std::span<const std::string_view> continuous_channels(EntityKind kind);
std::span<const std::string_view> discrete_commands(EntityKind kind);

/// Throws UnknownEntity / UnknownChannel when `actions` addresses something
/// the environment does not declare.
void validate_actions(const EnvironmentState& env, const ActionVector& actions);

}  // namespace labtwin
