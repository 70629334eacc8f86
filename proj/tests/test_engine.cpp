#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "labtwin/devices.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/process.hpp"
#include "labtwin/thermal.hpp"
#include "support.hpp"

using namespace labtwin;
using testing_support::entity;

namespace {

EnvironmentState cooling_env(double t0, double ta, double rate) {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, t0});
  register_entity(env, spec);
  Process p;
  p.id = "cool";
  p.bindings = {{"b", "T"}};
  p.contribute = [ta, rate](const StepContext& ctx, Derivative& d) { d.add(ctx.binding(0), -rate * (ctx.value(0) - ta)); };
  register_process(env, p);
  return env;
}

Process constant_source(const std::string& id, const std::string& slot, double rate) {
  Process p;
  p.id = id;
  p.bindings = {{"b", slot}};
  p.contribute = [rate](const StepContext& ctx, Derivative& d) { d.add(ctx.binding(0), rate); };
  return p;
}

}  // namespace

TEST_CASE("empty environment only advances time") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
  register_entity(env, spec);
  const auto before = env.mutable_state();
  const auto report = step(env, {});
  CHECK(env.continuous()[0] == before.s[0]);
  CHECK(env.kinematic().size() == before.x.size());
  CHECK(env.time() == doctest::Approx(0.01));
  CHECK(report.fired_events.empty());
  CHECK(report.active_processes.empty());
}

TEST_CASE("one Euler step of Newton cooling") {
  auto env = cooling_env(350.0, 300.0, 0.1);
  step(env, {});
  CHECK(read_slot(env, "b", "T").value == doctest::Approx(349.95).epsilon(1e-14));
}

TEST_CASE("process and event registration errors") {
  auto env = cooling_env(350.0, 300.0, 0.1);
  SUBCASE("duplicate process") {
    auto p = constant_source("cool", "T", 1.0);
    CHECK_THROWS_WITH_AS(register_process(env, p), doctest::Contains("DuplicateId"), Error);
  }
  SUBCASE("process on missing slot") {
    auto p = constant_source("bad", "nope", 1.0);
    CHECK_THROWS_WITH_AS(register_process(env, p), doctest::Contains("UnknownSlot"), Error);
  }
  SUBCASE("events") {
    Event e;
    e.id = "contact";
    e.bindings = {{"b", "T"}};
    e.trigger = [](const StepContext&) { return false; };
    e.effect = [](EventContext&) {};
    register_event(env, e);
    CHECK_THROWS_WITH_AS(register_event(env, e), doctest::Contains("DuplicateId"), Error);
    e.id = "toggle";
    e.bindings = {{"b", "missing_flag"}};
    CHECK_THROWS_WITH_AS(register_event(env, e), doctest::Contains("UnknownSlot"), Error);
  }
}

TEST_CASE("heater command fires its event") {
  EnvironmentState env;
  register_entity(env, entity("hp", EntityKind::heater));
  install_heater(env, "hp");
  ActionVector a;
  a.discrete.push_back(heater_command(env, "hp", true, 343.15));
  const auto report = step(env, a);
  CHECK(read_slot(env, "hp", "heaterOn").value == 1.0);
  CHECK(read_slot(env, "hp", "T_target").value == 343.15);
  REQUIRE(report.fired_events.size() == 1);
  CHECK(env.registry().events[report.fired_events[0]].id == "heater:hp");
}

TEST_CASE("unknown channel and entity are rejected before stepping") {
  EnvironmentState env;
  register_entity(env, entity("b", EntityKind::container));
  ActionVector a;
  a.continuous.push_back({"b", "spin", 1.0, {}});
  CHECK_THROWS_WITH_AS(step(env, a), doctest::Contains("UnknownChannel"), Error);
  a.continuous = {{"ghost", "pour", 1.0, "b"}};
  CHECK_THROWS_WITH_AS(step(env, a), doctest::Contains("UnknownEntity"), Error);
  CHECK(env.step_count() == 0);
}

TEST_CASE("non-finite state rolls back") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
  spec.slots.push_back({"U", "K", SlotSpace::continuous, 1.0});
  register_entity(env, spec);
  register_process(env, constant_source("ok", "U", 5.0));
  Process blowup;
  blowup.id = "blowup";
  blowup.bindings = {{"b", "T"}};
  blowup.precondition = [](const StepContext& ctx) -> std::string_view { return ctx.value(0) > 300.0 ? "" : "hot"; };
  blowup.contribute = [](const StepContext& ctx, Derivative& d) {
    d.add(ctx.binding(0), std::numeric_limits<double>::infinity());
  };
  register_process(env, blowup);
  step(env, {});
  const auto before = env.mutable_state();
  env.set_value(env.slot("b", "T"), 301.0);
  const auto armed = env.mutable_state();
  CHECK_THROWS_WITH_AS(step(env, {}), doctest::Contains("NonFiniteState"), Error);
  CHECK(env.mutable_state().s == armed.s);
  CHECK(env.step_count() == before.steps);
}

TEST_CASE("inactive processes contribute nothing and are reported") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
  register_entity(env, spec);
  auto p = constant_source("gated", "T", 100.0);
  p.precondition = [](const StepContext&) -> std::string_view { return "never"; };
  register_process(env, p);
  auto report = step(env, {});
  CHECK(read_slot(env, "b", "T").value == 300.0);
  REQUIRE(report.gated_processes.size() == 1);
  CHECK(report.gated_processes[0].reason == "never");
  CHECK_FALSE(report.process_active(0));

  auto disabled = env;
  disabled.set_process_enabled(0, false);
  step(env, {});
  step(disabled, {});
  CHECK(env.continuous()[0] == disabled.continuous()[0]);
}

TEST_CASE("contributions are evaluated at start-of-step state") {
  // Two processes that each read the other's slot: a Gauss-Seidel update
  // would give a different answer from the Jacobi one.
  EnvironmentState env(0.5);
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"u", "1", SlotSpace::continuous, 1.0});
  spec.slots.push_back({"v", "1", SlotSpace::continuous, 2.0});
  register_entity(env, spec);
  Process pu;
  pu.id = "u";
  pu.bindings = {{"b", "u"}, {"b", "v"}};
  pu.contribute = [](const StepContext& c, Derivative& d) { d.add(c.binding(0), c.value(1)); };
  Process pv;
  pv.id = "v";
  pv.bindings = {{"b", "v"}, {"b", "u"}};
  pv.contribute = [](const StepContext& c, Derivative& d) { d.add(c.binding(0), -c.value(1)); };
  register_process(env, pu);
  register_process(env, pv);
  step(env, {});
  CHECK(read_slot(env, "b", "u").value == 1.0 + 0.5 * 2.0);
  CHECK(read_slot(env, "b", "v").value == 2.0 - 0.5 * 1.0);
}

TEST_CASE("registration order of additive processes does not matter") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> rate(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rates(6);
    for (auto& r : rates) r = rate(rng);
    auto build = [&](const std::vector<std::size_t>& order) {
      EnvironmentState env;
      auto spec = entity("b", EntityKind::container);
      spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
      register_entity(env, spec);
      for (auto i : order) register_process(env, constant_source("p" + std::to_string(i), "T", rates[i]));
      for (int k = 0; k < 10; ++k) step(env, {});
      return read_slot(env, "b", "T").value;
    };
    std::vector<std::size_t> order{0, 1, 2, 3, 4, 5};
    const double a = build(order);
    std::shuffle(order.begin(), order.end(), rng);
    const double b = build(order);
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("events fire in registration order on live state") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"a", "", SlotSpace::logical, 0.0});
  spec.slots.push_back({"b", "", SlotSpace::logical, 0.0});
  register_entity(env, spec);
  Event first;
  first.id = "first";
  first.bindings = {{"b", "a"}};
  first.trigger = [](const StepContext& c) { return !c.flag(0); };
  first.effect = [](EventContext& c) { c.set_flag(0, true); };
  Event second;
  second.id = "second";
  second.bindings = {{"b", "a"}, {"b", "b"}};
  second.trigger = [](const StepContext& c) { return c.flag(0); };
  second.effect = [](EventContext& c) { c.set_flag(1, true); };
  register_event(env, first);
  register_event(env, second);
  const auto report = step(env, {});
  CHECK(report.fired_events == std::vector<std::uint32_t>{0, 1});
  CHECK(read_slot(env, "b", "b").value == 1.0);
}

TEST_CASE("event effects are idempotent within a step") {
  EnvironmentState env;
  register_entity(env, entity("hp", EntityKind::heater));
  install_heater(env, "hp");
  ActionVector a;
  a.discrete.push_back(heater_command(env, "hp", true, 330.0));
  auto once = env;
  step(once, a);
  auto twice = env;
  step(twice, a);
  const auto& ev = twice.registry().events[0];
  EventContext ctx(twice, a, twice.registry().event_bindings[0]);
  ev.effect(ctx);
  CHECK(once.mutable_state().s == twice.mutable_state().s);
  CHECK(once.mutable_state().l == twice.mutable_state().l);
}

TEST_CASE("an event can disable a process") {
  EnvironmentState env;
  auto spec = entity("b", EntityKind::container);
  spec.slots.push_back({"T", "K", SlotSpace::continuous, 300.0});
  register_entity(env, spec);
  register_process(env, constant_source("heat", "T", 100.0));
  Event stop;
  stop.id = "stop";
  stop.bindings = {{"b", "T"}};
  stop.trigger = [](const StepContext& c) { return c.value(0) >= 302.0; };
  stop.effect = [](EventContext& c) { c.enable_process("heat", false); };
  register_event(env, stop);
  for (int i = 0; i < 10; ++i) step(env, {});
  CHECK(read_slot(env, "b", "T").value == doctest::Approx(302.0));
  CHECK_FALSE(env.process_enabled(0));
}

TEST_CASE("step_batch length mismatch") {
  auto env = cooling_env(350.0, 300.0, 0.1);
  auto batch = clone_batch(env, 2);
  std::vector<ActionVector> actions(3);
  CHECK_THROWS_WITH_AS(step_batch(batch, actions), doctest::Contains("LengthMismatch"), Error);
}

TEST_CASE("batch stepping equals sequential stepping") {
  EnvironmentState env;
  register_entity(env, entity("room", EntityKind::ambient));
  register_entity(env, entity("hp", EntityKind::heater));
  install_heater(env, "hp");
  add_ambient_node(env, "room", 298.15);
  add_thermal_node(env, "hp", 0.6, 500.0, 298.15);
  add_link(env, {"gen", Generation{"hp", "", 25.0}, std::nullopt});
  add_link(env, {"loss", Convection{"hp", "room", 25.0, 0.04}, std::nullopt});

  std::vector<ActionVector> actions(1000);
  actions[3].discrete.push_back(heater_command(env, "hp", true, 343.15));
  actions[600].discrete.push_back(heater_command(env, "hp", false, 0.0));

  auto batch = clone_batch(env, 64);
  std::vector<EnvironmentState> sequential(64, env);
  for (const auto& a : actions) {
    std::vector<ActionVector> per_env(64, a);
    step_batch(batch, per_env);
  }
  for (auto& e : sequential) {
    for (const auto& a : actions) step(e, a);
  }
  auto rolled = clone_batch(env, 64);
  rollout_batch(rolled, actions);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(batch[i] == sequential[i]);
    CHECK(rolled[i] == sequential[i]);
  }
  CHECK(read_slot(batch[0], "hp", "T").value > 298.15);
}

TEST_CASE("RK4 is more accurate than Euler on Newton cooling") {
  auto euler = cooling_env(350.0, 300.0, 2.0);
  auto rk4 = euler;
  StepOptions opt;
  opt.integrator = Integrator::rk4;
  for (int i = 0; i < 100; ++i) {
    step(euler, {});
    step(rk4, {}, opt);
  }
  const double exact = 300.0 + 50.0 * std::exp(-2.0);
  const double e_err = std::abs(read_slot(euler, "b", "T").value - exact);
  const double r_err = std::abs(read_slot(rk4, "b", "T").value - exact);
  CHECK(r_err < e_err * 1e-3);
}

TEST_CASE("identical runs give identical reports") {
  auto a = cooling_env(350.0, 300.0, 0.1);
  auto b = a;
  for (int i = 0; i < 20; ++i) CHECK(step(a, {}) == step(b, {}));
}
