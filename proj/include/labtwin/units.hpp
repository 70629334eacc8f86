#pragma once

#include <string_view>

namespace labtwin {

/// Physical dimension of a scenario quantity. Plain numbers are read in the
/// base unit listed next to each entry.
enum class Dimension {
  dimensionless,        // 1
  temperature,          // K
  mass,                 // kg
  time,                 // s
  amount,               // mol
  molality,             // mol/kg
  volume,               // uL
  density,              // g/mL
  conductance,          // W/K
  specific_heat,        // J/(kg K)
  molar_energy,         // J/mol
  length,               // m
  area,                 // m^2
  conductivity,         // W/(m K)
  heat_transfer,        // W/(m^2 K)
  angle,                // rad
  flow_coefficient,     // kg/(s rad)
  rate,                 // 1/s
};

std::string_view to_string(Dimension d);

/// Parses "<number> <unit>" (e.g. "70 C", "100 g", "4 mmol") into the base
/// unit of `expected`. Throws UnitError for unknown or mismatched units and
/// ValidationError for malformed numbers.
double parse_quantity(std::string_view text, Dimension expected);

/// As above, but the dimension is whatever the unit says. Returns the value
/// in that dimension's base unit.
double parse_quantity_any(std::string_view text);

}  // namespace labtwin
