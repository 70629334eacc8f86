#include "labtwin/state.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "labtwin/process.hpp"

namespace labtwin {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::RegistrationAfterStart: return "RegistrationAfterStart";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::UnknownSlot: return "UnknownSlot";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NonPositiveParameter: return "NonPositiveParameter";
    case ErrorCode::NonPositiveSolvent: return "NonPositiveSolvent";
    case ErrorCode::NegativeMoles: return "NegativeMoles";
    case ErrorCode::NegativeMass: return "NegativeMass";
    case ErrorCode::NonPositiveA: return "NonPositiveA";
    case ErrorCode::Overdraw: return "Overdraw";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::LeafWithChildren: return "LeafWithChildren";
    case ErrorCode::ActionFailed: return "ActionFailed";
    case ErrorCode::WorkflowStillRunning: return "WorkflowStillRunning";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnitError: return "UnitError";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::pair<EntityKind, std::string_view>, 7> kKindNames{{
    {EntityKind::container, "container"},
    {EntityKind::heater, "heater"},
    {EntityKind::liquid_handler, "liquid-handler"},
    {EntityKind::scale, "scale"},
    {EntityKind::faucet, "faucet"},
    {EntityKind::robot_proxy, "robot-proxy"},
    {EntityKind::ambient, "ambient"},
}};

constexpr std::array<std::string_view, 14> kUnits{
    "", "1", "K", "kg", "mol/kg", "W/K", "J/K", "rad", "s", "ref", "count", "kg/s", "uL", "W"};

}  // namespace

std::string_view to_string(EntityKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<EntityKind> parse_entity_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  // Accept underscores as an alternative spelling.
  if (text == "liquid_handler") return EntityKind::liquid_handler;
  if (text == "robot_proxy") return EntityKind::robot_proxy;
  return std::nullopt;
}

bool is_known_unit(std::string_view unit) {
  return std::find(kUnits.begin(), kUnits.end(), unit) != kUnits.end();
}

std::optional<std::size_t> decode_entity_ref(double value) {
  if (!(value >= 1.0)) return std::nullopt;
  return static_cast<std::size_t>(value) - 1;
}

EnvironmentState::EnvironmentState(double dt) : dt_(dt), registry_(std::make_shared<Registry>()) {
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCode::NonPositiveParameter, "dt must be positive");
}

void EnvironmentState::require_not_started(std::string_view what) const {
  if (started()) fail(ErrorCode::RegistrationAfterStart, std::string(what));
}

void EnvironmentState::declare_species(const std::string& name, std::optional<double> molar_mass) {
  require_not_started("species " + name);
  if (find_species(name)) fail(ErrorCode::DuplicateId, "species " + name);
  if (!mixtures_.empty()) {
    fail(ErrorCode::ValidationError, "species must be declared before mixture holders: " + name);
  }
  species_.push_back(name);
  molar_mass_.push_back(molar_mass);
}

std::optional<std::size_t> EnvironmentState::find_species(std::string_view name) const {
  auto it = std::find(species_.begin(), species_.end(), name);
  if (it == species_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - species_.begin());
}

std::size_t EnvironmentState::species_index(std::string_view name) const {
  if (auto i = find_species(name)) return *i;
  fail(ErrorCode::ValidationError, "undeclared species " + std::string(name));
}

std::optional<std::size_t> EnvironmentState::find_entity(std::string_view id) const {
  auto it = entity_index_.find(std::string(id));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EnvironmentState::entity_index(std::string_view id) const {
  if (auto i = find_entity(id)) return *i;
  fail(ErrorCode::UnknownEntity, std::string(id));
}

double EnvironmentState::parameter(std::size_t entity, std::string_view name, double fallback) const {
  const auto& params = entities_.at(entity).parameters;
  auto it = params.find(std::string(name));
  return it == params.end() ? fallback : it->second;
}

std::optional<SlotId> EnvironmentState::find_slot(std::size_t entity, std::string_view name) const {
  const auto& index = slot_index_.at(entity);
  auto it = index.find(std::string(name));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

SlotId EnvironmentState::slot(std::size_t entity, std::string_view name) const {
  if (auto id = find_slot(entity, name)) return *id;
  fail(ErrorCode::UnknownSlot, entities_.at(entity).id + "." + std::string(name));
}

SlotId EnvironmentState::slot(std::string_view entity, std::string_view name) const {
  return slot(entity_index(entity), name);
}

std::vector<SlotInfo>& EnvironmentState::infos(SlotSpace space) {
  switch (space) {
    case SlotSpace::kinematic: return x_info_;
    case SlotSpace::continuous: return s_info_;
    case SlotSpace::logical: return l_info_;
  }
  return s_info_;
}

const std::vector<SlotInfo>& EnvironmentState::infos(SlotSpace space) const {
  return const_cast<EnvironmentState*>(this)->infos(space);
}

const SlotInfo& EnvironmentState::slot_info(SlotId id) const { return infos(id.space).at(id.index); }

std::size_t EnvironmentState::slot_count(SlotSpace space) const { return infos(space).size(); }

double EnvironmentState::value(SlotId id) const {
  switch (id.space) {
    case SlotSpace::kinematic: return mut_.x.at(id.index);
    case SlotSpace::continuous: return mut_.s.at(id.index);
    case SlotSpace::logical: return mut_.l.at(id.index) ? 1.0 : 0.0;
  }
  return 0.0;
}

void EnvironmentState::set_value(SlotId id, double v) {
  switch (id.space) {
    case SlotSpace::kinematic: mut_.x.at(id.index) = v; break;
    case SlotSpace::continuous: mut_.s.at(id.index) = v; break;
    case SlotSpace::logical: mut_.l.at(id.index) = v != 0.0 ? 1 : 0; break;
  }
}

SlotId EnvironmentState::push_slot(std::uint32_t owner, const SlotDecl& decl) {
  if (!is_known_unit(decl.unit)) {
    fail(ErrorCode::UnitError, entities_.at(owner).id + "." + decl.name + " [" + decl.unit + "]");
  }
  auto& index = slot_index_.at(owner);
  if (index.count(decl.name)) fail(ErrorCode::DuplicateId, entities_.at(owner).id + "." + decl.name);
  auto& table = infos(decl.space);
  SlotId id{decl.space, static_cast<std::uint32_t>(table.size())};
  table.push_back({decl.name, decl.unit, owner});
  switch (decl.space) {
    case SlotSpace::kinematic: mut_.x.push_back(decl.initial); break;
    case SlotSpace::continuous: mut_.s.push_back(decl.initial); break;
    case SlotSpace::logical: mut_.l.push_back(decl.initial != 0.0 ? 1 : 0); break;
  }
  index.emplace(decl.name, id);
  return id;
}

SlotId EnvironmentState::add_slot(std::size_t entity, const SlotDecl& decl) {
  require_not_started("slot " + decl.name);
  return push_slot(static_cast<std::uint32_t>(entity), decl);
}

std::optional<std::size_t> EnvironmentState::find_mixture(std::size_t entity) const {
  for (std::size_t i = 0; i < mixtures_.size(); ++i) {
    if (mixtures_[i].owner == entity) return i;
  }
  return std::nullopt;
}

std::size_t EnvironmentState::mixture_index(std::size_t entity) const {
  if (auto i = find_mixture(entity)) return *i;
  fail(ErrorCode::ValidationError, entities_.at(entity).id + " holds no mixture");
}

std::optional<std::size_t> EnvironmentState::find_thermal_node(SlotId temperature) const {
  if (temperature.space != SlotSpace::continuous) return std::nullopt;
  for (std::size_t i = 0; i < thermal_nodes_.size(); ++i) {
    if (thermal_nodes_[i].temperature == temperature.index) return i;
  }
  return std::nullopt;
}

void EnvironmentState::add_thermal_node_record(const ThermalNodeRecord& record) {
  require_not_started("thermal node");
  thermal_nodes_.push_back(record);
}

void EnvironmentState::add_node_conductance(std::size_t node, double conductance) {
  require_not_started("thermal link");
  thermal_nodes_.at(node).conductance += conductance;
}

Registry& EnvironmentState::registry_mut() {
  if (registry_.use_count() > 1) registry_ = std::make_shared<Registry>(*registry_);
  return *registry_;
}

namespace {

void add_mixture_slots(EnvironmentState& env, std::size_t entity, std::string_view prefix,
                       std::vector<MixtureLayout>& layouts, const EntitySpec& spec) {
  auto initial = [&](const std::string& name) {
    auto it = spec.initial.find(name);
    return it == spec.initial.end() ? 0.0 : it->second;
  };
  const std::string solvent_name = std::string(prefix) + "solvent_mass";
  MixtureLayout layout;
  layout.owner = static_cast<std::uint32_t>(entity);
  layout.solvent = env.add_slot(entity, {solvent_name, "kg", SlotSpace::continuous, initial(solvent_name)}).index;
  for (std::size_t k = 0; k < env.species().size(); ++k) {
    const std::string name = std::string(prefix) + env.species()[k];
    SlotId id = env.add_slot(entity, {name, "mol/kg", SlotSpace::continuous, initial(name)});
    if (k == 0) layout.first_molality = id.index;
  }
  if (env.species().empty()) layout.first_molality = layout.solvent + 1;
  layouts.push_back(layout);
}

}  // namespace

EntityId register_entity(EnvironmentState& env, const EntitySpec& spec) {
  if (env.started()) fail(ErrorCode::RegistrationAfterStart, spec.id);
  if (spec.id.empty()) fail(ErrorCode::ValidationError, "entity id must not be empty");
  if (env.find_entity(spec.id)) fail(ErrorCode::DuplicateId, spec.id);

  const std::size_t index = env.entities_.size();
  env.entities_.push_back(spec);
  env.entity_index_.emplace(spec.id, index);
  env.slot_index_.emplace_back();

  auto initial = [&](const std::string& name, double fallback = 0.0) {
    auto it = spec.initial.find(name);
    return it == spec.initial.end() ? fallback : it->second;
  };
  auto add = [&](const std::string& name, const char* unit, SlotSpace space, double fallback = 0.0) {
    env.add_slot(index, {name, unit, space, initial(name, fallback)});
  };

  try {
    switch (spec.kind) {
      case EntityKind::container:
        add("support", "ref", SlotSpace::kinematic);
        add_mixture_slots(env, index, "", env.mixtures_, spec);
        break;
      case EntityKind::heater:
        add("heaterOn", "", SlotSpace::logical);
        add("T_target", "K", SlotSpace::continuous);
        break;
      case EntityKind::liquid_handler:
        add("tipLoaded", "", SlotSpace::logical);
        add("tipInSolution", "", SlotSpace::logical);
        add("tip_attached", "", SlotSpace::kinematic);
        add("well", "ref", SlotSpace::kinematic);
        add_mixture_slots(env, index, "tip.", env.mixtures_, spec);
        add("disposals", "count", SlotSpace::continuous);
        add("tips_remaining", "count", SlotSpace::continuous, env.parameter(index, "tips", 96.0));
        break;
      case EntityKind::scale:
        add("reading", "kg", SlotSpace::continuous);
        break;
      case EntityKind::faucet:
        add("angle", "rad", SlotSpace::continuous);
        break;
      case EntityKind::robot_proxy:
        add("holding", "ref", SlotSpace::kinematic);
        break;
      case EntityKind::ambient:
        break;
    }
    for (const auto& decl : spec.slots) {
      SlotDecl d = decl;
      d.initial = initial(decl.name, decl.initial);
      env.add_slot(index, d);
    }
    for (const auto& [name, value] : spec.initial) {
      if (!env.find_slot(index, name)) fail(ErrorCode::UnknownSlot, spec.id + "." + name);
    }
  } catch (...) {
    // Unwind the partial registration so the environment stays consistent.
    for (auto space : {SlotSpace::kinematic, SlotSpace::continuous, SlotSpace::logical}) {
      auto& table = env.infos(space);
      while (!table.empty() && table.back().owner == index) {
        table.pop_back();
        switch (space) {
          case SlotSpace::kinematic: env.mut_.x.pop_back(); break;
          case SlotSpace::continuous: env.mut_.s.pop_back(); break;
          case SlotSpace::logical: env.mut_.l.pop_back(); break;
        }
      }
    }
    if (!env.mixtures_.empty() && env.mixtures_.back().owner == index) env.mixtures_.pop_back();
    env.slot_index_.pop_back();
    env.entity_index_.erase(spec.id);
    env.entities_.pop_back();
    throw;
  }
  return spec.id;
}

SlotValue read_slot(const EnvironmentState& env, std::string_view id, std::string_view slot) {
  SlotId s = env.slot(env.entity_index(id), slot);
  return {env.value(s), env.slot_info(s).unit};
}

EnvironmentBatch clone_batch(const EnvironmentState& env, std::size_t n) {
  if (n == 0) fail(ErrorCode::ZeroCount, "clone_batch requires n >= 1");
  EnvironmentBatch batch;
  batch.environments.assign(n, env);
  return batch;
}

}  // namespace labtwin
