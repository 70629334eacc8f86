#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labtwin/devices.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/kinetics.hpp"
#include "labtwin/state.hpp"
#include "labtwin/thermal.hpp"
#include "labtwin/workflow.hpp"

namespace labtwin {

struct ScenarioMeta {
  std::string name;
  double dt = EnvironmentState::kDefaultDt;
  double duration = 0.0;
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::euler;
};

struct SpeciesDecl {
  std::string name;
  std::optional<double> molar_mass;  // g/mol
};

struct MixtureDecl {
  EntityId holder;
  Mixture mixture;
};

struct ThermalNodeDecl {
  EntityId entity;
  std::string slot = "T";
  bool ambient = false;
  double mass = 0.0;
  double specific_heat = 0.0;
  double temperature = 0.0;
};

struct TraceSpec {
  std::uint64_t stride = 100;
  std::vector<SlotKey> columns;
};

/// A validated scenario document. Sections are registered in the order
/// species, entities, mixtures, thermal nodes, thermal links, reactions,
/// devices; entries keep file order inside their section.
struct Scenario {
  ScenarioMeta meta;
  std::vector<SpeciesDecl> species;
  std::vector<EntitySpec> entities;
  std::vector<MixtureDecl> mixtures;
  std::vector<ThermalNodeDecl> thermal_nodes;
  std::vector<ThermalLink> thermal_links;
  std::vector<ReactionTemplate> reactions;
  std::vector<FaucetSpec> faucets;
  WorkflowSpec workflow;
  std::vector<VerificationTarget> targets;
  TraceSpec trace;

  std::uint64_t total_steps() const;
};

/// Throws ParseError (with line and column), ValidationError or UnitError.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

EnvironmentState build_environment(const Scenario& scenario);

struct TraceEvent {
  double time = 0.0;
  std::string event;
};

struct Trace {
  std::vector<std::string> columns;  // "time_s", then "<entity>.<slot>[unit]"
  std::vector<std::vector<double>> rows;
  std::vector<TraceEvent> events;
};

struct RunOptions {
  std::optional<std::uint64_t> stride;
  /// Keep the per-step action vectors (used by the benchmark).
  bool keep_actions = false;
  bool keep_reports = false;
  /// Stop after this many steps instead of the scenario duration.
  std::optional<std::uint64_t> max_steps;
};

struct RunResult {
  Trace trace;
  VerificationReport report;
  EnvironmentState final_state;
  Workflow workflow;
  std::vector<ActionVector> actions;
  std::vector<StepReport> reports;
};

RunResult run(const Scenario& scenario, const RunOptions& options = {});

enum class TraceFormat { csv, jsonl };

std::string emit_trace(const Trace& trace, TraceFormat format);

/// Shortest round-trip decimal form.
std::string format_number(double value);

struct BenchReport {
  std::size_t n_envs = 0;
  std::uint64_t steps = 0;
  std::size_t threads = 0;
  double seconds_with = 0.0;
  double seconds_without = 0.0;
  double steps_per_second_with = 0.0;     // environment-steps per second
  double steps_per_second_without = 0.0;
  double overhead = 0.0;  // (t_with - t_without) / t_without

  std::string summary() const;
};

BenchReport bench(const Scenario& scenario, std::size_t n_envs, std::uint64_t steps, unsigned repetitions = 3);

/// Human-readable listing of entities, slots, processes and events.
std::string describe(const Scenario& scenario);

}  // namespace labtwin
