#include <doctest.h>

#include "labtwin/engine.hpp"
#include "labtwin/state.hpp"
#include "support.hpp"

using namespace labtwin;
using testing_support::entity;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ValidationError;
}

}  // namespace

TEST_CASE("heater registers with heaterOn false") {
  EnvironmentState env;
  auto spec = entity("hp", EntityKind::heater);
  spec.parameters["K_gen"] = 20.0;
  CHECK(register_entity(env, spec) == "hp");
  const auto v = read_slot(env, "hp", "heaterOn");
  CHECK(v.value == 0.0);
  CHECK(env.slot_info(env.slot("hp", "heaterOn")).owner == 0);
  CHECK(env.slot("hp", "heaterOn").space == SlotSpace::logical);
}

TEST_CASE("duplicate entity id") {
  EnvironmentState env;
  register_entity(env, entity("b", EntityKind::container));
  CHECK(code_of([&] { register_entity(env, entity("b", EntityKind::heater)); }) == ErrorCode::DuplicateId);
}

TEST_CASE("initial value read back exactly") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 0.0});
  spec.initial["T"] = 298.15;
  register_entity(env, spec);
  const auto v = read_slot(env, "b", "T");
  CHECK(v.value == 298.15);
  CHECK(v.unit == "K");
}

TEST_CASE("read_slot errors") {
  EnvironmentState env;
  register_entity(env, entity("b", EntityKind::container));
  CHECK(code_of([&] { read_slot(env, "b", "foo"); }) == ErrorCode::UnknownSlot);
  CHECK(code_of([&] { read_slot(env, "nope", "T"); }) == ErrorCode::UnknownEntity);
}

TEST_CASE("registration after start is rejected") {
  EnvironmentState env;
  register_entity(env, entity("b", EntityKind::container));
  step(env, {});
  CHECK(code_of([&] { register_entity(env, entity("c", EntityKind::container)); }) ==
        ErrorCode::RegistrationAfterStart);
}

TEST_CASE("unknown slot unit is rejected") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"q", "furlong", SlotSpace::continuous, 0.0});
  CHECK_THROWS_AS(register_entity(env, spec), Error);
}

TEST_CASE("logical slots hold only 0 or 1") {
  EnvironmentState env;
  auto spec = entity("hp", EntityKind::heater);
  spec.initial["heaterOn"] = 2.0;
  register_entity(env, spec);
  CHECK(env.logical()[0] == 1);
  env.set_value(env.slot("hp", "heaterOn"), -3.5);
  CHECK(env.logical()[0] == 1);
  env.set_value(env.slot("hp", "heaterOn"), 0.0);
  CHECK(env.logical()[0] == 0);
}

TEST_CASE("slot ownership partitions x, s and l") {
  EnvironmentState env;
  env.declare_species("A");
  register_entity(env, entity("b", EntityKind::container));
  register_entity(env, entity("hp", EntityKind::heater));
  register_entity(env, entity("lh", EntityKind::liquid_handler));
  register_entity(env, entity("sc", EntityKind::scale));
  std::size_t owned = 0;
  for (auto space : {SlotSpace::kinematic, SlotSpace::continuous, SlotSpace::logical}) {
    for (std::uint32_t i = 0; i < env.slot_count(space); ++i) {
      const auto& info = env.slot_info({space, i});
      CHECK(info.owner < env.entity_count());
      CHECK(env.find_slot(info.owner, info.name) == SlotId{space, i});
      ++owned;
    }
  }
  CHECK(owned == env.kinematic().size() + env.continuous().size() + env.logical().size());
}

TEST_CASE("clone_batch") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
  register_entity(env, spec);

  SUBCASE("zero count") { CHECK(code_of([&] { clone_batch(env, 0); }) == ErrorCode::ZeroCount); }

  SUBCASE("single copy matches original") {
    auto batch = clone_batch(env, 1);
    step(env, {});
    step(batch[0], {});
    CHECK(env == batch[0]);
  }

  SUBCASE("copies are independent") {
    auto batch = clone_batch(env, 3);
    batch[1].set_value(batch[1].slot("b", "T"), 10.0);
    CHECK(batch[0].value(batch[0].slot("b", "T")) == 300.0);
    CHECK(env.value(env.slot("b", "T")) == 300.0);
  }
}

TEST_CASE("clock advances by dt per step") {
  EnvironmentState env(0.25);
  for (int i = 1; i <= 8; ++i) {
    step(env, {});
    CHECK(env.time() == 0.25 * i);
    CHECK(env.step_count() == static_cast<std::uint64_t>(i));
  }
}

TEST_CASE("non-positive dt") {
  CHECK_THROWS_AS(EnvironmentState(0.0), Error);
  CHECK_THROWS_AS(EnvironmentState(-0.01), Error);
}
