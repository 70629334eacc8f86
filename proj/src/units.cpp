#include "labtwin/units.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <string>

#include "labtwin/error.hpp"

namespace labtwin {

namespace {

struct UnitDef {
  std::string_view name;
  Dimension dim;
  double scale;
  double offset = 0.0;  // base = value * scale + offset
};

constexpr std::array kUnits{
    UnitDef{"1", Dimension::dimensionless, 1.0},
    UnitDef{"K", Dimension::temperature, 1.0},
    UnitDef{"C", Dimension::temperature, 1.0, 273.15},
    UnitDef{"degC", Dimension::temperature, 1.0, 273.15},
    UnitDef{"\xC2\xB0" "C", Dimension::temperature, 1.0, 273.15},
    UnitDef{"kg", Dimension::mass, 1.0},
    UnitDef{"g", Dimension::mass, 1e-3},
    UnitDef{"mg", Dimension::mass, 1e-6},
    UnitDef{"s", Dimension::time, 1.0},
    UnitDef{"ms", Dimension::time, 1e-3},
    UnitDef{"min", Dimension::time, 60.0},
    UnitDef{"h", Dimension::time, 3600.0},
    UnitDef{"mol", Dimension::amount, 1.0},
    UnitDef{"mmol", Dimension::amount, 1e-3},
    UnitDef{"umol", Dimension::amount, 1e-6},
    UnitDef{"mol/kg", Dimension::molality, 1.0},
    UnitDef{"mmol/kg", Dimension::molality, 1e-3},
    UnitDef{"uL", Dimension::volume, 1.0},
    UnitDef{"\xC2\xB5L", Dimension::volume, 1.0},
    UnitDef{"mL", Dimension::volume, 1e3},
    UnitDef{"L", Dimension::volume, 1e6},
    UnitDef{"g/mL", Dimension::density, 1.0},
    UnitDef{"kg/L", Dimension::density, 1.0},
    UnitDef{"kg/m^3", Dimension::density, 1e-3},
    UnitDef{"W/K", Dimension::conductance, 1.0},
    UnitDef{"J/(kg K)", Dimension::specific_heat, 1.0},
    UnitDef{"J/(kg*K)", Dimension::specific_heat, 1.0},
    UnitDef{"J/kg/K", Dimension::specific_heat, 1.0},
    UnitDef{"kJ/(kg K)", Dimension::specific_heat, 1e3},
    UnitDef{"J/mol", Dimension::molar_energy, 1.0},
    UnitDef{"kJ/mol", Dimension::molar_energy, 1e3},
    UnitDef{"m", Dimension::length, 1.0},
    UnitDef{"cm", Dimension::length, 1e-2},
    UnitDef{"mm", Dimension::length, 1e-3},
    UnitDef{"m^2", Dimension::area, 1.0},
    UnitDef{"m2", Dimension::area, 1.0},
    UnitDef{"cm^2", Dimension::area, 1e-4},
    UnitDef{"cm2", Dimension::area, 1e-4},
    UnitDef{"W/(m K)", Dimension::conductivity, 1.0},
    UnitDef{"W/(m*K)", Dimension::conductivity, 1.0},
    UnitDef{"W/m/K", Dimension::conductivity, 1.0},
    UnitDef{"W/(m^2 K)", Dimension::heat_transfer, 1.0},
    UnitDef{"W/(m^2*K)", Dimension::heat_transfer, 1.0},
    UnitDef{"W/m^2/K", Dimension::heat_transfer, 1.0},
    UnitDef{"rad", Dimension::angle, 1.0},
    UnitDef{"deg", Dimension::angle, 3.14159265358979323846 / 180.0},
    UnitDef{"kg/(s rad)", Dimension::flow_coefficient, 1.0},
    UnitDef{"kg/(s*rad)", Dimension::flow_coefficient, 1.0},
    UnitDef{"g/(s rad)", Dimension::flow_coefficient, 1e-3},
    UnitDef{"1/s", Dimension::rate, 1.0},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::pair<double, const UnitDef*> split(std::string_view text) {
  const std::string_view t = trim(text);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || !std::isfinite(value)) {
    fail(ErrorCode::ValidationError, "malformed quantity \"" + std::string(text) + "\"");
  }
  const std::string_view unit = trim(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
  if (unit.empty()) return {value, nullptr};
  for (const auto& u : kUnits) {
    if (u.name == unit) return {value, &u};
  }
  fail(ErrorCode::UnitError, "unknown unit \"" + std::string(unit) + "\"");
}

}  // namespace

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::dimensionless: return "dimensionless";
    case Dimension::temperature: return "temperature";
    case Dimension::mass: return "mass";
    case Dimension::time: return "time";
    case Dimension::amount: return "amount";
    case Dimension::molality: return "molality";
    case Dimension::volume: return "volume";
    case Dimension::density: return "density";
    case Dimension::conductance: return "conductance";
    case Dimension::specific_heat: return "specific heat";
    case Dimension::molar_energy: return "molar energy";
    case Dimension::length: return "length";
    case Dimension::area: return "area";
    case Dimension::conductivity: return "conductivity";
    case Dimension::heat_transfer: return "heat transfer coefficient";
    case Dimension::angle: return "angle";
    case Dimension::flow_coefficient: return "flow coefficient";
    case Dimension::rate: return "rate";
  }
  return "";
}

double parse_quantity(std::string_view text, Dimension expected) {
  auto [value, unit] = split(text);
  if (!unit) return value;
  if (unit->dim != expected) {
    fail(ErrorCode::UnitError, "\"" + std::string(text) + "\" is not a " + std::string(to_string(expected)));
  }
  return value * unit->scale + unit->offset;
}

double parse_quantity_any(std::string_view text) {
  auto [value, unit] = split(text);
  return unit ? value * unit->scale + unit->offset : value;
}

}  // namespace labtwin
