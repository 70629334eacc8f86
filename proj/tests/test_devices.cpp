#include <doctest.h>

#include "labtwin/devices.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/kinetics.hpp"
#include "labtwin/thermal.hpp"
#include "support.hpp"

using namespace labtwin;
using testing_support::entity;

namespace {

struct Bench {
  EnvironmentState env;
  ActionVector act;

  void run(const DiscreteAction& d) {
    act = {};
    act.discrete.push_back(d);
    step(env, act);
  }
  void lh(LiquidHandlerOp op, const std::string& target = {}, double ul = 0.0) {
    run(liquid_handler_command(env, "lh", {op, target, ul}));
  }
};

Bench handler_bench() {
  Bench b;
  b.env.declare_species("KI");
  register_entity(b.env, entity("src", EntityKind::container));
  register_entity(b.env, entity("well", EntityKind::container));
  auto lh = entity("lh", EntityKind::liquid_handler);
  lh.parameters["tips"] = 2.0;
  register_entity(b.env, lh);
  install_liquid_handler(b.env, "lh");
  Mixture m;
  m.solvent_mass = 0.1;
  m.molality = {{"KI", 0.04}};
  write_mixture(b.env, "src", m);
  return b;
}

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

TEST_CASE("heater commands") {
  EnvironmentState env;
  register_entity(env, entity("room", EntityKind::ambient));
  register_entity(env, entity("hp", EntityKind::heater));
  install_heater(env, "hp");
  add_ambient_node(env, "room", 298.15);
  add_thermal_node(env, "hp", 0.6, 500.0, 298.15);
  add_link(env, {"g", Generation{"hp", "", 20.0}, std::nullopt});

  ActionVector on;
  on.discrete.push_back(heater_command(env, "hp", true, 343.15));
  step(env, on);
  CHECK(env.flag(env.slot("hp", "heaterOn")));
  const double t1 = read_slot(env, "hp", "T").value;
  step(env, {});
  CHECK(read_slot(env, "hp", "T").value > t1);

  ActionVector retarget;
  retarget.discrete.push_back(heater_command(env, "hp", true, 330.0));
  step(env, retarget);
  step(env, retarget);
  CHECK(read_slot(env, "hp", "T_target").value == 330.0);
  CHECK(env.flag(env.slot("hp", "heaterOn")));

  ActionVector off;
  off.discrete.push_back(heater_command(env, "hp", false, 0.0));
  step(env, off);
  const double t2 = read_slot(env, "hp", "T").value;
  step(env, {});
  CHECK(read_slot(env, "hp", "T").value == t2);
  CHECK(code_of([&] { heater_command(env, "room", true, 300.0); }) == ErrorCode::ValidationError);
  CHECK(code_of([&] { heater_command(env, "ghost", true, 300.0); }) == ErrorCode::UnknownEntity);
}

TEST_CASE("liquid handler preconditions") {
  auto b = handler_bench();
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::aspirate, {}, 100.0), doctest::Contains("tipLoaded"), Error);
  b.lh(LiquidHandlerOp::load_tip);
  CHECK(b.env.flag(b.env.slot("lh", "tipLoaded")));
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::load_tip), doctest::Contains("!tipLoaded"), Error);
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::aspirate, {}, 100.0), doctest::Contains("tipInSolution"), Error);
  b.lh(LiquidHandlerOp::move_to, "well");
  CHECK_FALSE(b.env.flag(b.env.slot("lh", "tipInSolution")));
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::aspirate, {}, 100.0), doctest::Contains("tipInSolution"), Error);
  b.lh(LiquidHandlerOp::move_to, "src");
  CHECK(b.env.flag(b.env.slot("lh", "tipInSolution")));
  CHECK(code_of([&] { b.lh(LiquidHandlerOp::aspirate, {}, 500.0); }) == ErrorCode::CapacityExceeded);
}

TEST_CASE("aspirate then dispense moves solution at its molality") {
  auto b = handler_bench();
  const double moles = total_moles(b.env, "KI");
  b.lh(LiquidHandlerOp::load_tip);
  b.lh(LiquidHandlerOp::move_to, "src");
  b.lh(LiquidHandlerOp::aspirate, {}, 100.0);
  CHECK(read_slot(b.env, "lh", "tip.solvent_mass").value == doctest::Approx(1e-4));
  CHECK(read_slot(b.env, "lh", "tip.KI").value == doctest::Approx(0.04));
  b.lh(LiquidHandlerOp::move_to, "well");
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::dispense, {}, 150.0), doctest::Contains("Overdraw"), Error);
  b.lh(LiquidHandlerOp::dispense, {}, 100.0);
  CHECK(read_slot(b.env, "well", "solvent_mass").value == doctest::Approx(1e-4));
  CHECK(molality(b.env, "well", "KI") == doctest::Approx(0.04));
  CHECK(read_slot(b.env, "src", "solvent_mass").value == doctest::Approx(0.0999));
  CHECK(total_moles(b.env, "KI") == doctest::Approx(moles).epsilon(1e-12));
}

TEST_CASE("tip disposal") {
  auto b = handler_bench();
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::remove_tip), doctest::Contains("tipLoaded"), Error);
  b.lh(LiquidHandlerOp::load_tip);
  b.lh(LiquidHandlerOp::move_to, "src");
  b.lh(LiquidHandlerOp::aspirate, {}, 10.0);
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::remove_tip), doctest::Contains("tipEmpty"), Error);
  b.lh(LiquidHandlerOp::dispense, {}, 10.0);
  b.lh(LiquidHandlerOp::remove_tip);
  CHECK(read_slot(b.env, "lh", "disposals").value == 1.0);
  CHECK_FALSE(b.env.flag(b.env.slot("lh", "tipLoaded")));
  b.lh(LiquidHandlerOp::load_tip);
  b.lh(LiquidHandlerOp::remove_tip);
  CHECK(read_slot(b.env, "lh", "disposals").value == 2.0);
  CHECK_THROWS_WITH_AS(b.lh(LiquidHandlerOp::load_tip), doctest::Contains("tipAvailable"), Error);
}

TEST_CASE("scale readings") {
  EnvironmentState env;
  env.declare_species("H2O2");
  register_entity(env, entity("scale", EntityKind::scale));
  auto beaker = entity("beaker", EntityKind::container);
  beaker.parameters["tare_mass"] = 0.050;
  register_entity(env, beaker);
  register_entity(env, entity("flask", EntityKind::container));
  install_scale(env, "scale");
  Mixture m;
  m.solvent_mass = 0.100;
  write_mixture(env, "beaker", m);
  m.molality = {{"H2O2", 0.044}};
  write_mixture(env, "flask", m);

  CHECK(scale_read(env, "scale") == 0.0);
  ActionVector place;
  place.discrete.push_back(place_command(env, "beaker", "scale"));
  step(env, place);
  CHECK(scale_read(env, "scale") == doctest::Approx(0.150));
  CHECK(read_slot(env, "scale", "reading").value == doctest::Approx(0.150));

  ActionVector pour;
  pour.continuous.push_back(testing_support::pour_action("flask", "beaker", 0.048));
  const double before = read_slot(env, "scale", "reading").value;
  step(env, pour);
  CHECK(read_slot(env, "scale", "reading").value - before == doctest::Approx(0.048).epsilon(1e-12));

  ActionVector pick;
  pick.discrete.push_back(pick_command(env, "beaker"));
  step(env, pick);
  CHECK(read_slot(env, "scale", "reading").value == 0.0);
}

TEST_CASE("scale counts solute mass when a molar mass is known") {
  EnvironmentState env;
  env.declare_species("KI", 166.0);
  register_entity(env, entity("scale", EntityKind::scale));
  register_entity(env, entity("beaker", EntityKind::container));
  Mixture m;
  m.solvent_mass = 0.100;
  m.molality = {{"KI", 0.04}};
  write_mixture(env, "beaker", m);
  ActionVector place;
  place.discrete.push_back(place_command(env, "beaker", "scale"));
  step(env, place);
  CHECK(scale_read(env, "scale") == doctest::Approx(0.100 + 0.004 * 0.166));
}

TEST_CASE("contact slot follows placement") {
  EnvironmentState env;
  register_entity(env, entity("hp", EntityKind::heater));
  register_entity(env, entity("beaker", EntityKind::container));
  const SlotId on = install_contact(env, "beaker", "hp");
  CHECK(install_contact(env, "beaker", "hp") == on);
  CHECK(env.slot_info(on).name == contact_slot_name("hp"));
  CHECK_FALSE(env.flag(on));
  ActionVector place;
  place.discrete.push_back(place_command(env, "beaker", "hp"));
  step(env, place);
  CHECK(env.flag(on));
  ActionVector pick;
  pick.discrete.push_back(pick_command(env, "beaker"));
  step(env, pick);
  CHECK_FALSE(env.flag(on));
}

TEST_CASE("faucet") {
  EnvironmentState env;
  env.declare_species("salt");
  register_entity(env, entity("tap", EntityKind::faucet));
  register_entity(env, entity("sink", EntityKind::container));
  install_faucet(env, {"tap", "sink", 0.01, 1.5});
  Mixture m;
  m.solvent_mass = 0.1;
  m.molality = {{"salt", 1.0}};
  write_mixture(env, "sink", m);

  for (int i = 0; i < 10; ++i) step(env, {});
  CHECK(read_slot(env, "sink", "solvent_mass").value == 0.1);

  ActionVector open;
  open.discrete.push_back(knob_command(env, "tap", 1.0));
  step(env, open);
  for (int i = 0; i < 1000; ++i) step(env, {});
  CHECK(read_slot(env, "sink", "solvent_mass").value == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(molality(env, "sink", "salt") == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(total_moles(env, "salt") == doctest::Approx(0.1).epsilon(1e-12));

  ActionVector wide;
  wide.discrete.push_back(knob_command(env, "tap", 3.0));
  step(env, wide);
  CHECK(read_slot(env, "tap", "angle").value == 1.5);
}

TEST_CASE("volume conversion and op names") {
  EnvironmentState env;
  auto dense = entity("dense", EntityKind::container);
  dense.parameters["density"] = 1.2;
  register_entity(env, dense);
  register_entity(env, entity("plain", EntityKind::container));
  CHECK(volume_to_mass(env, 0, 1000.0) == doctest::Approx(1.2e-3));
  CHECK(volume_to_mass(env, 1, 1000.0) == doctest::Approx(1e-3));
  for (auto op : {LiquidHandlerOp::load_tip, LiquidHandlerOp::remove_tip, LiquidHandlerOp::move_to,
                  LiquidHandlerOp::aspirate, LiquidHandlerOp::dispense}) {
    CHECK(parse_liquid_handler_op(to_string(op)) == op);
  }
  CHECK_FALSE(parse_liquid_handler_op("shake"));
}
