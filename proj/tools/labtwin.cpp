// labtwin: run, verify, benchmark and inspect lab scenarios.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "labtwin/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitError = 2;

void print_report(const labtwin::VerificationReport& report, std::ostream& os) {
  os << "workflow " << (report.completed ? "completed" : "did not complete") << "\n";
  for (const auto& t : report.targets) {
    os << (t.pass ? "PASS " : "FAIL ") << t.target.container << "." << t.target.species << " "
       << labtwin::to_string(t.target.kind) << " " << labtwin::format_number(t.target.threshold)
       << " final=" << labtwin::format_number(t.final_molality) << " peak=" << labtwin::format_number(t.peak)
       << "\n";
  }
  for (const auto& f : report.failures) {
    os << "precondition t=" << labtwin::format_number(f.time) << " " << f.source << ": " << f.name << "\n";
  }
  os << (report.passed() ? "verification passed" : "verification FAILED") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic lab digital-twin simulator"};
  app.require_subcommand(1);

  std::string file;
  std::string trace_path;
  std::string format = "csv";
  std::uint64_t stride = 0;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and verify it");
  run_cmd->add_option("file", file, "Scenario file")->required();
  run_cmd->add_option("--trace", trace_path, "Write the trace here ('-' for stdout)");
  run_cmd->add_option("--format", format, "Trace format")->check(CLI::IsMember({"csv", "jsonl"}));
  run_cmd->add_option("--stride", stride, "Record every N steps (default from scenario)");

  auto* verify_cmd = app.add_subcommand("verify", "Simulate a scenario and report verification only");
  verify_cmd->add_option("file", file, "Scenario file")->required();

  std::size_t envs = 64;
  std::uint64_t steps = 1000;
  unsigned reps = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Time batch stepping with and without semantics");
  bench_cmd->add_option("file", file, "Scenario file")->required();
  bench_cmd->add_option("--envs", envs, "Number of environments");
  bench_cmd->add_option("--steps", steps, "Steps per environment");
  bench_cmd->add_option("--reps", reps, "Repetitions (best time is kept)");

  auto* describe_cmd = app.add_subcommand("describe", "Print resolved entities, slots, processes and events");
  describe_cmd->add_option("file", file, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    const labtwin::Scenario scenario = labtwin::load_scenario(file);
    if (*describe_cmd) {
      std::cout << labtwin::describe(scenario);
      return kExitOk;
    }
    if (*bench_cmd) {
      const auto report = labtwin::bench(scenario, envs, steps, reps);
      std::cout << report.summary() << "\n";
      return kExitOk;
    }
    labtwin::RunOptions options;
    if (stride > 0) options.stride = stride;
    const auto result = labtwin::run(scenario, options);
    if (*run_cmd && !trace_path.empty()) {
      const auto fmt = format == "jsonl" ? labtwin::TraceFormat::jsonl : labtwin::TraceFormat::csv;
      const std::string body = labtwin::emit_trace(result.trace, fmt);
      if (trace_path == "-") {
        std::cout << body;
      } else {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) throw labtwin::Error(labtwin::ErrorCode::ValidationError, "cannot write " + trace_path);
        out << body;
      }
    }
    print_report(result.report, trace_path == "-" ? std::cerr : std::cout);
    return result.report.passed() ? kExitOk : kExitVerifyFailed;
  } catch (const labtwin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
