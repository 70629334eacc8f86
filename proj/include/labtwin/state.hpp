#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "labtwin/error.hpp"

namespace labtwin {

using EntityId = std::string;

enum class EntityKind { container, heater, liquid_handler, scale, faucet, robot_proxy, ambient };

std::string_view to_string(EntityKind kind);
std::optional<EntityKind> parse_entity_kind(std::string_view text);

/// Which state vector a slot lives in: x (kinematic proxy), s (continuous
/// semantic) or l (logical).
enum class SlotSpace : std::uint8_t { kinematic, continuous, logical };

struct SlotId {
  SlotSpace space = SlotSpace::continuous;
  std::uint32_t index = 0;

  friend bool operator==(const SlotId&, const SlotId&) = default;
};

struct SlotDecl {
  std::string name;
  std::string unit;
  SlotSpace space = SlotSpace::continuous;
  double initial = 0.0;
};

struct EntitySpec {
  EntityId id;
  EntityKind kind = EntityKind::container;
  std::map<std::string, double> parameters;
  /// Slots beyond the ones every entity of `kind` receives.
  std::vector<SlotDecl> slots;
  /// Initial values for standard or extra slots, by slot name.
  std::map<std::string, double> initial;
};

struct SlotInfo {
  std::string name;
  std::string unit;
  std::uint32_t owner = 0;
};

struct SlotValue {
  double value = 0.0;
  std::string_view unit;
};

/// Solvent mass and one molality slot per declared species, laid out
/// contiguously in s so kinetics can work on a span.
struct MixtureLayout {
  std::uint32_t owner = 0;
  std::uint32_t solvent = 0;
  std::uint32_t first_molality = 0;
};

struct ThermalNodeRecord {
  std::uint32_t entity = 0;
  std::uint32_t temperature = 0;  // index into s
  double heat_capacity = 0.0;     // m*C, J/K
  double conductance = 0.0;       // sum of incident link conductances, W/K
  bool ambient = false;
};

struct Registry;

/// Kinematic slots that reference another entity store index + 1; 0 is "none".
inline double encode_entity_ref(std::optional<std::size_t> entity) {
  return entity ? static_cast<double>(*entity + 1) : 0.0;
}
std::optional<std::size_t> decode_entity_ref(double value);

/// One simulated world. Copyable: copies share the (read-only while stepping)
/// process/event registry and own every mutable vector.
class EnvironmentState {
 public:
  static constexpr double kDefaultDt = 0.01;

  explicit EnvironmentState(double dt = kDefaultDt);

  double dt() const noexcept { return dt_; }
  double time() const noexcept { return static_cast<double>(mut_.steps) * dt_; }
  std::uint64_t step_count() const noexcept { return mut_.steps; }
  bool started() const noexcept { return mut_.steps > 0; }
  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) { rng_seed_ = seed; }

  // Species must be declared before any mixture holder is registered.
  void declare_species(const std::string& name, std::optional<double> molar_mass = std::nullopt);
  const std::vector<std::string>& species() const noexcept { return species_; }
  std::optional<std::size_t> find_species(std::string_view name) const;
  std::size_t species_index(std::string_view name) const;
  std::optional<double> molar_mass(std::size_t species) const { return molar_mass_[species]; }

  std::size_t entity_count() const noexcept { return entities_.size(); }
  const EntitySpec& entity(std::size_t index) const { return entities_.at(index); }
  std::optional<std::size_t> find_entity(std::string_view id) const;
  std::size_t entity_index(std::string_view id) const;
  double parameter(std::size_t entity, std::string_view name, double fallback) const;

  std::optional<SlotId> find_slot(std::size_t entity, std::string_view name) const;
  SlotId slot(std::size_t entity, std::string_view name) const;
  SlotId slot(std::string_view entity, std::string_view name) const;
  const SlotInfo& slot_info(SlotId id) const;
  std::size_t slot_count(SlotSpace space) const;

  double value(SlotId id) const;
  bool flag(SlotId id) const { return value(id) != 0.0; }
  void set_value(SlotId id, double v);
  void set_flag(SlotId id, bool on) { set_value(id, on ? 1.0 : 0.0); }

  std::span<const double> kinematic() const noexcept { return mut_.x; }
  std::span<const double> continuous() const noexcept { return mut_.s; }
  std::span<const std::uint8_t> logical() const noexcept { return mut_.l; }
  std::span<double> continuous_mut() noexcept { return mut_.s; }

  /// Adds a slot to an already registered entity. Only allowed before the
  /// first step.
  SlotId add_slot(std::size_t entity, const SlotDecl& decl);

  const std::vector<MixtureLayout>& mixtures() const noexcept { return mixtures_; }
  std::optional<std::size_t> find_mixture(std::size_t entity) const;
  std::size_t mixture_index(std::size_t entity) const;

  const std::vector<ThermalNodeRecord>& thermal_nodes() const noexcept { return thermal_nodes_; }
  std::optional<std::size_t> find_thermal_node(SlotId temperature) const;
  void add_thermal_node_record(const ThermalNodeRecord& record);
  void add_node_conductance(std::size_t node, double conductance);

  const Registry& registry() const { return *registry_; }
  /// Copy-on-write access for registration.
  Registry& registry_mut();

  bool process_enabled(std::size_t index) const { return mut_.process_enabled.at(index) != 0; }
  bool event_enabled(std::size_t index) const { return mut_.event_enabled.at(index) != 0; }
  void set_process_enabled(std::size_t index, bool on) { mut_.process_enabled.at(index) = on ? 1 : 0; }
  void set_event_enabled(std::size_t index, bool on) { mut_.event_enabled.at(index) = on ? 1 : 0; }

  void require_not_started(std::string_view what) const;

  // Everything that step() may mutate. Snapshot/restore gives rollback.
  struct Mutable {
    std::uint64_t steps = 0;
    std::vector<double> x;
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    std::vector<std::uint8_t> process_enabled;
    std::vector<std::uint8_t> event_enabled;
  };
  const Mutable& mutable_state() const noexcept { return mut_; }
  void restore(const Mutable& snapshot) { mut_ = snapshot; }
  void advance_clock() { ++mut_.steps; }

  // Registration hooks used by register_process/register_event.
  void append_process_flag() { mut_.process_enabled.push_back(1); }
  void append_event_flag() { mut_.event_enabled.push_back(1); }

  friend bool operator==(const EnvironmentState& a, const EnvironmentState& b) {
    return a.mut_.steps == b.mut_.steps && a.mut_.x == b.mut_.x && a.mut_.s == b.mut_.s &&
           a.mut_.l == b.mut_.l && a.mut_.process_enabled == b.mut_.process_enabled &&
           a.mut_.event_enabled == b.mut_.event_enabled;
  }

 private:
  friend EntityId register_entity(EnvironmentState& env, const EntitySpec& spec);

  std::vector<SlotInfo>& infos(SlotSpace space);
  const std::vector<SlotInfo>& infos(SlotSpace space) const;
  SlotId push_slot(std::uint32_t owner, const SlotDecl& decl);

  double dt_;
  std::uint64_t rng_seed_ = 0;
  std::vector<std::string> species_;
  std::vector<std::optional<double>> molar_mass_;
  std::vector<EntitySpec> entities_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  std::vector<SlotInfo> x_info_, s_info_, l_info_;
  std::vector<std::unordered_map<std::string, SlotId>> slot_index_;  // per entity
  std::vector<MixtureLayout> mixtures_;
  std::vector<ThermalNodeRecord> thermal_nodes_;
  std::shared_ptr<Registry> registry_;
  Mutable mut_;
};

struct EnvironmentBatch {
  std::vector<EnvironmentState> environments;
  std::size_t size() const noexcept { return environments.size(); }
  EnvironmentState& operator[](std::size_t i) { return environments[i]; }
  const EnvironmentState& operator[](std::size_t i) const { return environments[i]; }
};

/// Registers an entity and appends its standard (per-kind) and declared
/// slots to x/s/l.
EntityId register_entity(EnvironmentState& env, const EntitySpec& spec);

SlotValue read_slot(const EnvironmentState& env, std::string_view id, std::string_view slot);

EnvironmentBatch clone_batch(const EnvironmentState& env, std::size_t n);

bool is_known_unit(std::string_view unit);

}  // namespace labtwin
