#pragma once

#include <string>

#include "labtwin/engine.hpp"
#include "labtwin/kinetics.hpp"
#include "labtwin/state.hpp"

namespace testing_support {

inline labtwin::EntitySpec entity(const std::string& id, labtwin::EntityKind kind) {
  labtwin::EntitySpec spec;
  spec.id = id;
  spec.kind = kind;
  return spec;
}

inline labtwin::ContinuousAction pour_action(const std::string& src, const std::string& dst, double mass) {
  return labtwin::ContinuousAction{src, "pour", mass, dst};
}

}  // namespace testing_support
