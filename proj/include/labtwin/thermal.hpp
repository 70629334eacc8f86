#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "labtwin/process.hpp"
#include "labtwin/state.hpp"

namespace labtwin {

/// Q = k*A/d * (T_a - T_b), flowing from node a into node b.
struct Conduction {
  std::string a;
  std::string b;
  double conductivity = 0.0;  // W/(m K)
  double area = 0.0;          // m^2
  double thickness = 0.0;     // m
};

/// Q = h*A * (T_node - T_ambient), lost by the node.
struct Convection {
  std::string node;
  std::string ambient;
  double h = 0.0;     // W/(m^2 K)
  double area = 0.0;  // m^2
};

/// Proportional heater: Q = K_gen * (T_target - T_node), gained by the node.
/// The node defaults to the heater's own temperature.
struct Generation {
  std::string heater;
  std::string node;
  double gain = 0.0;  // W/K
};

struct ThermalLink {
  std::string id;
  std::variant<Conduction, Convection, Generation> params;
  /// Logical slot that must be true for the link to carry heat. Generation
  /// links are always additionally gated by the heater's heaterOn.
  std::optional<SlotKey> gate;
};

/// Node keys are "<entity>" (slot T) or "<entity>.<slot>".
SlotId add_thermal_node(EnvironmentState& env, std::string_view entity, double mass, double specific_heat,
                        double initial_temperature, std::string_view slot = "T");
SlotId add_ambient_node(EnvironmentState& env, std::string_view entity, double temperature,
                        std::string_view slot = "T");
SlotId thermal_node(const EnvironmentState& env, std::string_view key);

void add_link(EnvironmentState& env, const ThermalLink& link);

/// Heat flow of a single link at the current state (W); 0 when gated.
double link_heat_flow(const EnvironmentState& env, const ThermalLink& link);

/// dT/dt (indexed like s) of every thermal node from start-of-step
/// temperatures, summing only ungated links.
std::vector<double> thermal_process(const EnvironmentState& env);

/// sum m*C*T over non-ambient nodes, J.
double thermal_energy(const EnvironmentState& env);

/// Explicit Euler is stable for dt below 2 * min(mC / sum of conductances).
double stable_dt_limit(const EnvironmentState& env);

inline constexpr double kBiotLumpedLimit = 0.1;

double biot_number(double h, double k, double volume, double area);
inline bool biot_warning(double bi) { return bi > kBiotLumpedLimit; }

enum class ConvectionRegime { conduction_dominated, transition, convection_dominated };
std::string_view to_string(ConvectionRegime regime);

struct RayleighResult {
  double grashof = 0.0;
  double prandtl = 0.0;
  double rayleigh = 0.0;
  ConvectionRegime regime = ConvectionRegime::conduction_dominated;
};

RayleighResult rayleigh_number(double g, double beta, double delta_t, double length, double nu, double alpha);

}  // namespace labtwin
