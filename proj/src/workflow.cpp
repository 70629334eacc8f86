#include "labtwin/workflow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "labtwin/kinetics.hpp"

namespace labtwin {

namespace {

std::uint64_t steps_for(double duration, double dt) {
  if (!(duration >= 0.0) || !std::isfinite(duration)) fail(ErrorCode::ValidationError, "duration must be >= 0");
  // Guard against 0.07/0.01 = 7.000000000000001.
  return static_cast<std::uint64_t>(std::ceil(duration / dt - 1e-9));
}

void check_action(const EnvironmentState& env, const PrimitiveAction& action) {
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Wait>) {
          steps_for(a.duration, env.dt());
        } else if constexpr (std::is_same_v<T, Place>) {
          place_command(env, a.object, a.surface);
          steps_for(a.duration, env.dt());
        } else if constexpr (std::is_same_v<T, Pick>) {
          pick_command(env, a.object);
          if (!a.surface.empty()) env.entity_index(a.surface);
          steps_for(a.duration, env.dt());
        } else if constexpr (std::is_same_v<T, Pour>) {
          env.mixture_index(env.entity_index(a.src));
          env.mixture_index(env.entity_index(a.dst));
          if (a.src == a.dst) fail(ErrorCode::ValidationError, "pour into the same container");
          if (!(a.mass >= 0.0)) fail(ErrorCode::NegativeMass, "pour " + a.src);
          steps_for(a.duration, env.dt());
        } else if constexpr (std::is_same_v<T, HeaterSet>) {
          heater_command(env, a.heater, a.on, a.t_target);
        } else if constexpr (std::is_same_v<T, LiquidHandlerAction>) {
          liquid_handler_command(env, a.handler, a.command);
        } else if constexpr (std::is_same_v<T, ReadScale>) {
          scale_read(env, a.scale);
        } else if constexpr (std::is_same_v<T, SetKnob>) {
          knob_command(env, a.faucet, a.angle);
        }
      },
      action);
}

}  // namespace

std::string_view to_string(NodeStatus status) {
  switch (status) {
    case NodeStatus::not_started: return "NotStarted";
    case NodeStatus::running: return "Running";
    case NodeStatus::done: return "Done";
    case NodeStatus::failed: return "Failed";
  }
  return "";
}

Workflow Workflow::build(const EnvironmentState& env, const WorkflowSpec& spec) {
  Workflow wf;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& n : spec.nodes) {
    if (n.id.empty()) labtwin::fail(ErrorCode::ValidationError, "workflow node without id");
    if (!index.emplace(n.id, wf.nodes_.size()).second) labtwin::fail(ErrorCode::DuplicateId, "workflow node " + n.id);
    Node node;
    node.id = n.id;
    node.action = n.action;
    wf.nodes_.push_back(std::move(node));
  }
  auto lookup = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) labtwin::fail(ErrorCode::UnknownNode, "workflow node " + id);
    return it->second;
  };
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    for (const auto& c : spec.nodes[i].children) wf.nodes_[i].children.push_back(lookup(c));
  }
  wf.root_ = lookup(spec.root);

  // Depth-first walk from the root: a node met again on the current path is
  // a cycle; met again elsewhere means it has two parents.
  enum : std::uint8_t { unseen, on_path, finished };
  std::vector<std::uint8_t> mark(wf.nodes_.size(), unseen);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{wf.root_, 0}};
  mark[wf.root_] = on_path;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    Node& n = wf.nodes_[node];
    if (next == 0) {
      if (n.action && !n.children.empty()) labtwin::fail(ErrorCode::LeafWithChildren, n.id);
      if (!n.action && n.children.empty()) labtwin::fail(ErrorCode::ValidationError, "leaf " + n.id + " has no action");
      if (n.action) {
        check_action(env, *n.action);
        wf.leaves_.push_back(node);
        wf.leaf_order_.push_back(n.id);
      }
    }
    if (next < n.children.size()) {
      const std::size_t child = n.children[next++];
      if (mark[child] == on_path) labtwin::fail(ErrorCode::CycleDetected, wf.nodes_[child].id);
      if (mark[child] == finished) labtwin::fail(ErrorCode::ValidationError, "node " + wf.nodes_[child].id + " has two parents");
      mark[child] = on_path;
      wf.nodes_[child].parent = node;
      stack.emplace_back(child, 0);
    } else {
      mark[node] = finished;
      stack.pop_back();
    }
  }
  for (std::size_t i = 0; i < wf.nodes_.size(); ++i) {
    if (mark[i] == unseen) labtwin::fail(ErrorCode::ValidationError, "node " + wf.nodes_[i].id + " is unreachable from the root");
  }
  return wf;
}

NodeStatus Workflow::status(std::string_view id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return n.status;
  }
  labtwin::fail(ErrorCode::UnknownNode, std::string(id));
}

std::optional<std::string> Workflow::current_leaf() const {
  if (terminated() || cursor_ >= leaves_.size()) return std::nullopt;
  return nodes_[leaves_[cursor_]].id;
}

void Workflow::start_leaf(const EnvironmentState& env) {
  const std::size_t leaf = leaves_[cursor_];
  for (std::optional<std::size_t> n = leaf; n; n = nodes_[*n].parent) {
    if (nodes_[*n].status == NodeStatus::not_started) nodes_[*n].status = NodeStatus::running;
  }
  start_order_.push_back(nodes_[leaf].id);
  leaf_tick_ = 0;
  const double dt = env.dt();
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Wait>) {
          leaf_steps_ = steps_for(a.duration, dt);
        } else if constexpr (std::is_same_v<T, Place> || std::is_same_v<T, Pick> || std::is_same_v<T, Pour>) {
          leaf_steps_ = std::max<std::uint64_t>(1, steps_for(a.duration, dt));
        } else if constexpr (std::is_same_v<T, ReadScale>) {
          leaf_steps_ = 0;
        } else {
          leaf_steps_ = 1;
        }
      },
      *nodes_[leaf].action);

  if (const auto* pour = std::get_if<Pour>(&*nodes_[leaf].action)) {
    const auto& layout = env.mixtures()[env.mixture_index(env.entity_index(pour->src))];
    const double available = env.continuous()[layout.solvent];
    if (pour->mass > available * (1.0 + 1e-12)) {
      fail(env, "Overdraw: " + std::to_string(pour->mass) + " kg requested from " + std::to_string(available) + " kg");
    }
  }
}

void Workflow::finish_leaf() {
  std::size_t n = leaves_[cursor_];
  nodes_[n].status = NodeStatus::done;
  while (nodes_[n].parent) {
    n = *nodes_[n].parent;
    const bool all_done = std::all_of(nodes_[n].children.begin(), nodes_[n].children.end(),
                                      [&](std::size_t c) { return nodes_[c].status == NodeStatus::done; });
    if (!all_done) break;
    nodes_[n].status = NodeStatus::done;
  }
  ++cursor_;
}

ActionVector Workflow::emit(const EnvironmentState& env) {
  ActionVector out;
  const std::uint64_t i = leaf_tick_;
  const std::uint64_t n = leaf_steps_;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Place>) {
          if (i + 1 == n) out.discrete.push_back(place_command(env, a.object, a.surface));
        } else if constexpr (std::is_same_v<T, Pick>) {
          if (i == 0) out.discrete.push_back(pick_command(env, a.object));
        } else if constexpr (std::is_same_v<T, Pour>) {
          const double chunk = a.mass * static_cast<double>(i + 1) / static_cast<double>(n) -
                               a.mass * static_cast<double>(i) / static_cast<double>(n);
          if (chunk > 0.0) out.continuous.push_back({a.src, "pour", chunk, a.dst});
        } else if constexpr (std::is_same_v<T, HeaterSet>) {
          out.discrete.push_back(heater_command(env, a.heater, a.on, a.t_target));
        } else if constexpr (std::is_same_v<T, LiquidHandlerAction>) {
          out.discrete.push_back(liquid_handler_command(env, a.handler, a.command));
        } else if constexpr (std::is_same_v<T, SetKnob>) {
          out.discrete.push_back(knob_command(env, a.faucet, a.angle));
        }
      },
      *nodes_[leaves_[cursor_]].action);
  return out;
}

TickResult Workflow::tick(const EnvironmentState& env) {
  while (!terminated()) {
    const std::size_t leaf = leaves_[cursor_];
    if (nodes_[leaf].status == NodeStatus::not_started) {
      start_leaf(env);
      if (terminated()) break;
    }
    if (leaf_tick_ >= leaf_steps_) {
      if (const auto* read = std::get_if<ReadScale>(&*nodes_[leaf].action)) {
        recordings_.push_back({env.time(), read->label.empty() ? read->scale : read->label, scale_read(env, read->scale)});
      }
      finish_leaf();
      continue;
    }
    ActionVector actions = emit(env);
    ++leaf_tick_;
    return {std::move(actions), status()};
  }
  return {{}, status()};
}

void Workflow::settle(const EnvironmentState& env) {
  while (!terminated()) {
    const std::size_t leaf = leaves_[cursor_];
    const bool zero_step = std::holds_alternative<ReadScale>(*nodes_[leaf].action);
    if (nodes_[leaf].status == NodeStatus::not_started && !zero_step) return;
    if (nodes_[leaf].status == NodeStatus::not_started) start_leaf(env);
    if (leaf_tick_ < leaf_steps_) return;
    if (const auto* read = std::get_if<ReadScale>(&*nodes_[leaf].action)) {
      recordings_.push_back({env.time(), read->label.empty() ? read->scale : read->label, scale_read(env, read->scale)});
    }
    finish_leaf();
  }
}

void Workflow::fail(const EnvironmentState& env, const std::string& cause) {
  if (terminated()) return;
  const std::size_t leaf = leaves_[cursor_];
  for (std::optional<std::size_t> n = leaf; n; n = nodes_[*n].parent) nodes_[*n].status = NodeStatus::failed;
  failures_.push_back({env.time(), nodes_[leaf].id, cause});
}

void Workflow::observe(const EnvironmentState& env, const StepReport& report) {
  const auto& reg = env.registry();
  was_active_.resize(reg.processes.size(), 0);
  for (const auto& g : report.gated_processes) {
    if (was_active_[g.process]) failures_.push_back({env.time(), reg.processes[g.process].id, std::string(g.reason)});
  }
  std::fill(was_active_.begin(), was_active_.end(), 0);
  for (auto p : report.active_processes) was_active_[p] = 1;
}

namespace {

constexpr std::array<std::pair<TargetKind, std::string_view>, 4> kTargetKinds{{
    {TargetKind::above, "above"},
    {TargetKind::at_least, "at_least"},
    {TargetKind::at_most, "at_most"},
    {TargetKind::below_fraction_of_peak, "below_fraction_of_peak"},
}};

}  // namespace

std::string_view to_string(TargetKind kind) {
  for (const auto& [k, name] : kTargetKinds) {
    if (k == kind) return name;
  }
  return "";
}

std::optional<TargetKind> parse_target_kind(std::string_view text) {
  for (const auto& [k, name] : kTargetKinds) {
    if (name == text) return k;
  }
  return std::nullopt;
}

bool VerificationReport::passed() const {
  return completed && std::all_of(targets.begin(), targets.end(), [](const TargetResult& r) { return r.pass; });
}

void PeakTracker::track(const EnvironmentState& env, const EntityId& container, const std::string& species) {
  const auto& layout = env.mixtures()[env.mixture_index(env.entity_index(container))];
  const auto slot = static_cast<std::uint32_t>(layout.first_molality + env.species_index(species));
  entries_.push_back({container, species, slot, env.continuous()[slot]});
}

void PeakTracker::update(const EnvironmentState& env) {
  for (auto& e : entries_) e.peak = std::max(e.peak, env.continuous()[e.slot]);
}

double PeakTracker::peak(const EntityId& container, const std::string& species) const {
  for (const auto& e : entries_) {
    if (e.container == container && e.species == species) return e.peak;
  }
  return 0.0;
}

VerificationReport verify(const EnvironmentState& env, const Workflow& workflow,
                          std::span<const VerificationTarget> targets, const PeakTracker* peaks) {
  if (!workflow.terminated()) labtwin::fail(ErrorCode::WorkflowStillRunning, "verify called before the workflow ended");
  VerificationReport report;
  report.completed = workflow.status() == NodeStatus::done;
  report.failures = workflow.failures();
  for (const auto& t : targets) {
    TargetResult r;
    r.target = t;
    r.final_molality = molality(env, t.container, t.species);
    r.peak = peaks ? std::max(peaks->peak(t.container, t.species), r.final_molality) : r.final_molality;
    bool ok = false;
    switch (t.kind) {
      case TargetKind::above: ok = r.final_molality > t.threshold; break;
      case TargetKind::at_least: ok = r.final_molality >= t.threshold; break;
      case TargetKind::at_most: ok = r.final_molality <= t.threshold; break;
      case TargetKind::below_fraction_of_peak: ok = r.peak > 0.0 && r.final_molality < t.threshold * r.peak; break;
    }
    r.pass = ok && report.completed;
    report.targets.push_back(std::move(r));
  }
  return report;
}

}  // namespace labtwin
