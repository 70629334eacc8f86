// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "labtwin/scenario.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace labtwin;

namespace {

const std::string kSource = LABTWIN_SOURCE_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string scenario_path(const std::string& name) { return kSource + "/scenarios/" + name + ".json"; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

EntitySpec make(const std::string& id, EntityKind kind) {
  EntitySpec s;
  s.id = id;
  s.kind = kind;
  return s;
}

Outcome newton_cooling() {
  const auto start = Clock::now();
  EnvironmentState env;
  register_entity(env, make("room", EntityKind::ambient));
  register_entity(env, make("b", EntityKind::container));
  add_ambient_node(env, "room", 298.15);
  add_thermal_node(env, "b", 0.1, 840.0, 353.15);
  add_link(env, {"v", Convection{"b", "room", 10.0, 0.05}, std::nullopt});
  const SlotId t = env.slot("b", "T");
  double worst = 0.0;
  for (int k = 1; k <= 10000; ++k) {
    step(env, {});
    worst = std::max(worst, oracle::relative_error(env.value(t), oracle::newton_cooling(353.15, 298.15, 0.5 / 84.0, k * 0.01)));
  }
  const double secs = seconds_since(start);
  return {worst < 1e-3 && secs < 1.0, fmt("max rel err %.3g over 100 s, %.3f s wall", worst, secs)};
}

Outcome first_order() {
  EnvironmentState env;
  env.declare_species("A");
  env.declare_species("B");
  register_entity(env, make("c", EntityKind::container));
  Mixture m;
  m.solvent_mass = 1.0;
  m.molality = {{"A", 1.0}};
  write_mixture(env, "c", m);
  ReactionTemplate tpl;
  tpl.id = "decay";
  tpl.reactants = {{"A", 1, 1.0}};
  tpl.products = {{"B", 1}};
  tpl.kinetics = ConstantK{0.03};
  register_reaction(env, tpl);
  double worst = 0.0;
  for (int k = 1; k <= 10000; ++k) {
    step(env, {});
    worst = std::max(worst, oracle::relative_error(molality(env, "c", "A"), oracle::first_order(1.0, 0.03, k * 0.01)));
  }
  return {worst < 1e-3, fmt("max rel err %.3g over 100 s (k = 0.03 1/s)", worst)};
}

Outcome closed_system() {
  EnvironmentState env;
  for (const char* id : {"a", "b", "c"}) register_entity(env, make(id, EntityKind::container));
  add_thermal_node(env, "a", 0.6, 500.0, 360.0);
  add_thermal_node(env, "b", 0.1, 840.0, 300.0);
  add_thermal_node(env, "c", 0.1, 4180.0, 280.0);
  add_link(env, {"ab", Conduction{"a", "b", 1.0, 0.01, 0.002}, std::nullopt});
  add_link(env, {"bc", Conduction{"b", "c", 0.6, 0.01, 0.002}, std::nullopt});
  const double h0 = thermal_energy(env);
  for (int k = 0; k < 100000; ++k) step(env, {});
  const double drift = std::abs(thermal_energy(env) - h0) / h0;

  EnvironmentState pair;
  register_entity(pair, make("a", EntityKind::container));
  register_entity(pair, make("b", EntityKind::container));
  add_thermal_node(pair, "a", 0.6, 500.0, 360.0);
  add_thermal_node(pair, "b", 0.1, 840.0, 290.0);
  add_link(pair, {"ab", Conduction{"a", "b", 1.0, 0.01, 0.001}, std::nullopt});
  for (int k = 0; k < 100000; ++k) step(pair, {});
  const double mean = oracle::weighted_mean(300.0, 360.0, 84.0, 290.0);
  const double err = std::max(std::abs(read_slot(pair, "a", "T").value - mean), std::abs(read_slot(pair, "b", "T").value - mean));
  return {drift <= 1e-9 && err < 1e-6, fmt("enthalpy drift %.3g over 1e5 steps, pair off mean by %.3g K", drift, err)};
}

Outcome conservation() {
  int failures = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const std::string why = properties::conservation_case(seed);
    if (!why.empty() && failures++ == 0) first = why;
  }
  return {failures == 0, failures == 0 ? "1000 random pour/liquid-handler sequences conserved" : first};
}

Outcome reaction_gating() {
  const auto sc = load_scenario(scenario_path("sn1_70c"));
  RunOptions opt;
  opt.stride = 1;
  opt.keep_reports = true;
  const auto result = run(sc, opt);
  const auto& env = result.final_state;
  const auto& idx = env.registry().process_index;
  const auto it = idx.find("reaction:sn1@beaker");
  if (it == idx.end()) return {false, "SN1 reaction process missing"};
  const auto p = static_cast<std::uint32_t>(it->second);
  const auto& cols = result.trace.columns;
  const auto tcol = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "beaker.T[K]") - cols.begin());
  const auto oncol = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "heater.heaterOn[]") - cols.begin());
  if (tcol >= cols.size() || oncol >= cols.size()) return {false, "trace lacks beaker.T or heater.heaterOn"};

  std::size_t violations = 0;
  std::size_t active_steps = 0;
  for (std::size_t k = 0; k < result.reports.size(); ++k) {
    const double t = result.trace.rows[k][tcol];  // start-of-step solution temperature
    const bool inside = t >= 303.15 && t <= 343.15;
    const bool active = result.reports[k].process_active(p);
    active_steps += active;
    if (active && !inside) ++violations;
  }

  // Cooling after heater-off: from the post-off peak the solution must cool
  // monotonically toward the 298.15 K room temperature.
  std::size_t off = 0;
  for (std::size_t r = 1; r < result.trace.rows.size(); ++r) {
    if (result.trace.rows[r - 1][oncol] == 1.0 && result.trace.rows[r][oncol] == 0.0) off = r;
  }
  bool monotone = off > 0;
  std::size_t peak = off;
  for (std::size_t r = off; r < result.trace.rows.size(); ++r) {
    if (result.trace.rows[r][tcol] > result.trace.rows[peak][tcol]) peak = r;
  }
  for (std::size_t r = peak + 1; r < result.trace.rows.size() && monotone; ++r) {
    monotone = result.trace.rows[r][tcol] <= result.trace.rows[r - 1][tcol];
  }
  const double t_end = result.trace.rows.back()[tcol];
  const bool toward_room = t_end > 298.15 && t_end < result.trace.rows[peak][tcol];
  const double eti = result.report.targets.at(0).final_molality;
  const bool ok = violations == 0 && active_steps > 0 && monotone && toward_room && eti > 0.0 && result.report.passed();
  return {ok, fmt("%g active steps, 0 outside window: ", static_cast<double>(active_steps)) + (violations ? "no" : "yes") +
                  fmt(", heater off at %.2f s, final T %.2f C, EtI %.4f mol/kg", static_cast<double>(off) * sc.meta.dt,
                      t_end - 273.15, eti) +
                  (monotone ? ", monotone cooling" : ", NOT monotone")};
}

Outcome temperature_ordering() {
  const auto start = Clock::now();
  const auto hot = run(load_scenario(scenario_path("sn1_70c")));
  const auto warm = run(load_scenario(scenario_path("sn1_40c")));
  const double secs = seconds_since(start);
  const double a = hot.report.targets.at(0).final_molality;
  const double b = warm.report.targets.at(0).final_molality;
  return {b < a && secs < 30.0, fmt("EtI 70 C %.4f > 40 C %.4f mol/kg, %.2f s wall for both", a, b, secs)};
}

Outcome redox() {
  const auto sc = load_scenario(scenario_path("redox"));
  const auto result = run(sc);
  const auto& rec = result.workflow.recordings();
  if (rec.size() != 3) return {false, "expected three scale readings"};
  const double step1 = rec[1].value - rec[0].value;
  const double step2 = rec[2].value - rec[1].value;
  const bool mass_ok = std::abs(step1 - 0.048) <= 1e-12 && std::abs(step2 - 0.048) <= 1e-12;

  const auto& cols = result.trace.columns;
  const auto ccol = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "beaker0.I2_starch[mol/kg]") - cols.begin());
  if (ccol >= cols.size()) return {false, "trace lacks the complex column"};
  double at_step2 = 0.0;
  for (const auto& row : result.trace.rows) {
    if (row[0] <= rec[2].time) at_step2 = row[ccol];
  }
  const auto& target = result.report.targets.at(0);
  const bool rises = at_step2 > 0.0;
  const bool fades = target.final_molality < 0.01 * target.peak;

  const double delivered = 0.100 * 0.044 - read_mixture(result.final_state, "beaker1").moles("H2O2");
  const bool h2o2_ok = std::abs(delivered - 0.002112) <= 0.01 * 0.002112;
  return {mass_ok && rises && fades && h2o2_ok && result.report.passed(),
          fmt("scale +%.6f / +%.6f kg, ", step1, step2) +
              fmt("complex peak %.4g -> final %.3g mol/kg, ", target.peak, target.final_molality) +
              fmt("H2O2 delivered %.4f mmol", delivered * 1e3)};
}

Outcome batch_equivalence() {
  const auto sc = load_scenario(scenario_path("sn1_70c"));
  RunOptions opt;
  opt.keep_actions = true;
  opt.max_steps = 1000;
  const auto recorded = run(sc, opt);
  const EnvironmentState env = build_environment(sc);
  auto batch = clone_batch(env, 64);
  for (const auto& a : recorded.actions) {
    std::vector<ActionVector> per_env(64, a);
    step_batch(batch, per_env);
  }
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    EnvironmentState solo = env;
    for (const auto& a : recorded.actions) step(solo, a);
    mismatches += !(solo == batch[i]);
  }
  return {mismatches == 0, fmt("%g of 64 environments differ from sequential runs after 1000 steps", static_cast<double>(mismatches))};
}

Outcome overhead() {
  const auto sc = load_scenario(scenario_path("sn1_70c"));
  const std::uint64_t steps = 1000;
  const std::size_t n = 256;
  const auto mid = bench(sc, 64, steps, 3);
  const auto big = bench(sc, n, steps, 3);
  const bool finite = std::isfinite(mid.overhead) && std::isfinite(big.overhead);
  // Same total work both ways: n single-environment rollouts against one
  // batch of n, interleaved so load drift hits both.
  double solo = std::numeric_limits<double>::infinity();
  double solo_worst = 0.0;
  double batched = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 5; ++round) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += bench(sc, 1, steps, 1).seconds_with;
    solo = std::min(solo, t);
    solo_worst = std::max(solo_worst, t);
    batched = std::min(batched, bench(sc, n, steps, 1).seconds_with);
  }
  const double work = static_cast<double>(n) * static_cast<double>(steps);
  const double sps_one = work / solo;
  const double sps_big = work / batched;
  // Noise band: spread of the single-environment timings across rounds.
  const double noise = solo_worst / solo - 1.0;
  const bool amortized = sps_big * (1.0 + noise) >= sps_one;
  return {finite && amortized,
          fmt("overhead 64 envs %.2f%%, 256 envs %.2f%%; ", 100.0 * mid.overhead, 100.0 * big.overhead) +
              fmt("env-steps/s 1 env %.4g, 256 envs %.4g (noise %.1f%%)", sps_one, sps_big, 100.0 * noise)};
}

Outcome hsm() {
  int failures = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    const std::string why = properties::hsm_case(seed);
    if (!why.empty() && failures++ == 0) first = why;
  }
  return {failures == 0, failures == 0 ? "500 random trees" : first};
}

Outcome determinism() {
  std::string detail;
  bool ok = true;
  for (const std::string name : {"minimal", "sn1_70c", "sn1_40c", "redox"}) {
    const auto sc = load_scenario(scenario_path(name));
    const std::string a = emit_trace(run(sc).trace, TraceFormat::csv);
    const std::string b = emit_trace(run(sc).trace, TraceFormat::csv);
    const bool same = a == b;
    const bool golden = slurp(kSource + "/tests/golden/" + name + ".csv") == a;
    ok = ok && same && golden;
    detail += name + (same ? " repeatable" : " NOT repeatable") + (golden ? "/golden" : "/golden MISMATCH") + " ";
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Newton cooling oracle", newton_cooling},
      {"first-order kinetics oracle", first_order},
      {"closed-system enthalpy and equilibrium", closed_system},
      {"mass/mole conservation property", conservation},
      {"SN1 reaction gating and cooling", reaction_gating},
      {"temperature-yield ordering", temperature_ordering},
      {"redox workflow", redox},
      {"batch equivalence", batch_equivalence},
      {"overhead measurement", overhead},
      {"HSM properties", hsm},
      {"determinism and golden traces", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
