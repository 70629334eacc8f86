#include "labtwin/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "labtwin/units.hpp"

namespace labtwin {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  fail(ErrorCode::ValidationError, path + ": " + what);
}

const Json& member(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) invalid(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) invalid(path, std::string("missing \"") + key + "\"");
  return *it;
}

const Json* optional_member(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void expect_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!obj.is_object()) invalid(path, "expected an object");
  for (const auto& [key, unused] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) invalid(path, "unknown key \"" + key + "\"");
  }
}

const Json& array_at(const Json& obj, const char* key, const std::string& path) {
  const Json& v = member(obj, key, path);
  if (!v.is_array()) invalid(path + "." + key, "expected an array");
  return v;
}

std::string text(const Json& v, const std::string& path) {
  if (!v.is_string()) invalid(path, "expected a string");
  return v.get<std::string>();
}

std::string text_at(const Json& obj, const char* key, const std::string& path) {
  return text(member(obj, key, path), path + "." + key);
}

bool boolean(const Json& v, const std::string& path) {
  if (!v.is_boolean()) invalid(path, "expected true or false");
  return v.get<bool>();
}

double number(const Json& v, const std::string& path) {
  if (!v.is_number()) invalid(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(path, "expected a finite number");
  return d;
}

std::uint64_t count(const Json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  invalid(path, "expected a non-negative integer");
}

double quantity(const Json& v, Dimension d, const std::string& path) {
  if (v.is_number()) return number(v, path);
  if (!v.is_string()) invalid(path, "expected a number or a \"<value> <unit>\" string");
  try {
    return parse_quantity(v.get<std::string>(), d);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.detail());
  }
}

double quantity_at(const Json& obj, const char* key, Dimension d, const std::string& path) {
  return quantity(member(obj, key, path), d, path + "." + key);
}

double any_quantity(const Json& v, const std::string& path) {
  if (v.is_number()) return number(v, path);
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (!v.is_string()) invalid(path, "expected a number or a \"<value> <unit>\" string");
  try {
    return parse_quantity_any(v.get<std::string>());
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.detail());
  }
}

SlotKey slot_key(const std::string& ref, const std::string& path) {
  const auto dot = ref.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == ref.size()) invalid(path, "expected \"<entity>.<slot>\"");
  return {ref.substr(0, dot), ref.substr(dot + 1)};
}

Dimension parameter_dimension(std::string_view name) {
  if (name == "K_gen") return Dimension::conductance;
  if (name == "tare_mass" || name == "zero_offset") return Dimension::mass;
  if (name == "density") return Dimension::density;
  if (name == "capacity_ul") return Dimension::volume;
  return Dimension::dimensionless;
}

std::optional<SlotSpace> parse_space(std::string_view s) {
  if (s == "continuous" || s == "s") return SlotSpace::continuous;
  if (s == "logical" || s == "l") return SlotSpace::logical;
  if (s == "kinematic" || s == "x") return SlotSpace::kinematic;
  return std::nullopt;
}

void parse_meta(const Json& j, Scenario& sc) {
  const std::string path = "meta";
  expect_keys(j, {"name", "dt", "duration", "seed", "integrator", "description"}, path);
  if (auto* v = optional_member(j, "name")) sc.meta.name = text(*v, path + ".name");
  if (auto* v = optional_member(j, "dt")) sc.meta.dt = quantity(*v, Dimension::time, path + ".dt");
  sc.meta.duration = quantity_at(j, "duration", Dimension::time, path);
  if (auto* v = optional_member(j, "seed")) sc.meta.seed = count(*v, path + ".seed");
  if (auto* v = optional_member(j, "integrator")) {
    const std::string name = text(*v, path + ".integrator");
    if (name == "euler") {
      sc.meta.integrator = Integrator::euler;
    } else if (name == "rk4") {
      sc.meta.integrator = Integrator::rk4;
    } else {
      invalid(path + ".integrator", "expected \"euler\" or \"rk4\"");
    }
  }
  if (!(sc.meta.dt > 0.0)) invalid(path + ".dt", "must be positive");
  if (!(sc.meta.duration >= sc.meta.dt)) invalid(path + ".duration", "must be at least dt");
}

void parse_species(const Json& j, Scenario& sc) {
  if (!j.is_array()) invalid("species", "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "species[" + std::to_string(i) + "]";
    SpeciesDecl decl;
    if (j[i].is_string()) {
      decl.name = j[i].get<std::string>();
    } else {
      expect_keys(j[i], {"name", "molar_mass"}, path);
      decl.name = text_at(j[i], "name", path);
      if (auto* v = optional_member(j[i], "molar_mass")) {
        decl.molar_mass = number(*v, path + ".molar_mass");
        if (!(*decl.molar_mass > 0.0)) invalid(path + ".molar_mass", "must be positive");
      }
    }
    if (decl.name.empty()) invalid(path, "empty species name");
    sc.species.push_back(std::move(decl));
  }
}

void parse_entities(const Json& j, Scenario& sc) {
  if (!j.is_array()) invalid("entities", "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "entities[" + std::to_string(i) + "]";
    const Json& e = j[i];
    expect_keys(e, {"id", "kind", "parameters", "slots", "initial"}, path);
    EntitySpec spec;
    spec.id = text_at(e, "id", path);
    if (spec.id.find('.') != std::string::npos) invalid(path + ".id", "entity ids must not contain '.'");
    const std::string kind = text_at(e, "kind", path);
    auto k = parse_entity_kind(kind);
    if (!k) invalid(path + ".kind", "unknown kind \"" + kind + "\"");
    spec.kind = *k;
    if (auto* params = optional_member(e, "parameters")) {
      if (!params->is_object()) invalid(path + ".parameters", "expected an object");
      for (const auto& [name, value] : params->items()) {
        spec.parameters[name] = value.is_string()
                                    ? quantity(value, parameter_dimension(name), path + ".parameters." + name)
                                    : number(value, path + ".parameters." + name);
      }
    }
    if (auto* slots = optional_member(e, "slots")) {
      if (!slots->is_array()) invalid(path + ".slots", "expected an array");
      for (std::size_t s = 0; s < slots->size(); ++s) {
        const std::string spath = path + ".slots[" + std::to_string(s) + "]";
        const Json& sj = (*slots)[s];
        expect_keys(sj, {"name", "unit", "space", "initial"}, spath);
        SlotDecl decl;
        decl.name = text_at(sj, "name", spath);
        if (auto* u = optional_member(sj, "unit")) decl.unit = text(*u, spath + ".unit");
        if (auto* sp = optional_member(sj, "space")) {
          auto space = parse_space(text(*sp, spath + ".space"));
          if (!space) invalid(spath + ".space", "expected continuous, logical or kinematic");
          decl.space = *space;
        }
        if (auto* v = optional_member(sj, "initial")) decl.initial = any_quantity(*v, spath + ".initial");
        if (!is_known_unit(decl.unit)) fail(ErrorCode::UnitError, spath + ".unit: unknown unit \"" + decl.unit + "\"");
        spec.slots.push_back(std::move(decl));
      }
    }
    if (auto* init = optional_member(e, "initial")) {
      if (!init->is_object()) invalid(path + ".initial", "expected an object");
      for (const auto& [name, value] : init->items()) {
        spec.initial[name] = any_quantity(value, path + ".initial." + name);
      }
    }
    sc.entities.push_back(std::move(spec));
  }
}

void parse_mixtures(const Json& j, Scenario& sc) {
  if (!j.is_array()) invalid("mixtures", "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "mixtures[" + std::to_string(i) + "]";
    const Json& m = j[i];
    expect_keys(m, {"container", "solvent", "solutes", "color"}, path);
    MixtureDecl decl;
    decl.holder = text_at(m, "container", path);
    const double solvent = quantity_at(m, "solvent", Dimension::mass, path);
    std::vector<Solute> amounts;
    std::vector<std::pair<std::string, double>> molalities;
    if (auto* solutes = optional_member(m, "solutes")) {
      if (!solutes->is_array()) invalid(path + ".solutes", "expected an array");
      for (std::size_t s = 0; s < solutes->size(); ++s) {
        const std::string spath = path + ".solutes[" + std::to_string(s) + "]";
        const Json& sj = (*solutes)[s];
        expect_keys(sj, {"species", "amount", "molality"}, spath);
        const std::string species = text_at(sj, "species", spath);
        const bool has_amount = sj.contains("amount");
        if (has_amount == sj.contains("molality")) invalid(spath, "give exactly one of \"amount\" or \"molality\"");
        if (has_amount) {
          amounts.push_back({species, quantity_at(sj, "amount", Dimension::amount, spath)});
        } else {
          const double c = quantity_at(sj, "molality", Dimension::molality, spath);
          if (c < 0.0) fail(ErrorCode::NegativeMoles, spath + ": negative molality");
          molalities.emplace_back(species, c);
        }
      }
    }
    try {
      decl.mixture = make_mixture(solvent, amounts);
    } catch (const Error& e) {
      invalid(path, e.what());
    }
    for (const auto& [species, c] : molalities) decl.mixture.molality[species] += c;
    if (auto* c = optional_member(m, "color")) decl.mixture.color = text(*c, path + ".color");
    sc.mixtures.push_back(std::move(decl));
  }
}

std::optional<SlotKey> parse_gate(const Json& link, const std::string& path) {
  auto* g = optional_member(link, "gate");
  if (!g) return std::nullopt;
  return slot_key(text(*g, path + ".gate"), path + ".gate");
}

void parse_thermal(const Json& j, Scenario& sc) {
  expect_keys(j, {"nodes", "links"}, "thermal");
  if (auto* nodes = optional_member(j, "nodes")) {
    if (!nodes->is_array()) invalid("thermal.nodes", "expected an array");
    for (std::size_t i = 0; i < nodes->size(); ++i) {
      const std::string path = "thermal.nodes[" + std::to_string(i) + "]";
      const Json& n = (*nodes)[i];
      expect_keys(n, {"node", "ambient", "mass", "specific_heat", "T"}, path);
      ThermalNodeDecl decl;
      const std::string key = text_at(n, "node", path);
      const auto dot = key.find('.');
      decl.entity = key.substr(0, dot);
      if (dot != std::string::npos) decl.slot = key.substr(dot + 1);
      if (auto* a = optional_member(n, "ambient")) decl.ambient = boolean(*a, path + ".ambient");
      decl.temperature = quantity_at(n, "T", Dimension::temperature, path);
      if (!decl.ambient) {
        decl.mass = quantity_at(n, "mass", Dimension::mass, path);
        decl.specific_heat = quantity_at(n, "specific_heat", Dimension::specific_heat, path);
      }
      sc.thermal_nodes.push_back(std::move(decl));
    }
  }
  if (auto* links = optional_member(j, "links")) {
    if (!links->is_array()) invalid("thermal.links", "expected an array");
    for (std::size_t i = 0; i < links->size(); ++i) {
      const std::string path = "thermal.links[" + std::to_string(i) + "]";
      const Json& l = (*links)[i];
      ThermalLink link;
      const std::string kind = text_at(l, "kind", path);
      if (kind == "conduction") {
        expect_keys(l, {"id", "kind", "a", "b", "k", "area", "thickness", "gate"}, path);
        link.params = Conduction{text_at(l, "a", path), text_at(l, "b", path),
                                 quantity_at(l, "k", Dimension::conductivity, path),
                                 quantity_at(l, "area", Dimension::area, path),
                                 quantity_at(l, "thickness", Dimension::length, path)};
      } else if (kind == "convection") {
        expect_keys(l, {"id", "kind", "node", "ambient", "h", "area", "gate"}, path);
        link.params = Convection{text_at(l, "node", path), text_at(l, "ambient", path),
                                 quantity_at(l, "h", Dimension::heat_transfer, path),
                                 quantity_at(l, "area", Dimension::area, path)};
      } else if (kind == "generation") {
        expect_keys(l, {"id", "kind", "heater", "node", "K_gen", "gate"}, path);
        Generation gen;
        gen.heater = text_at(l, "heater", path);
        if (auto* n = optional_member(l, "node")) gen.node = text(*n, path + ".node");
        // Gain defaults to the heater's K_gen parameter, resolved at build.
        if (auto* k = optional_member(l, "K_gen")) gen.gain = quantity(*k, Dimension::conductance, path + ".K_gen");
        link.params = gen;
      } else {
        invalid(path + ".kind", "expected conduction, convection or generation");
      }
      if (auto* id = optional_member(l, "id")) link.id = text(*id, path + ".id");
      link.gate = parse_gate(l, path);
      sc.thermal_links.push_back(std::move(link));
    }
  }
}

TemperatureRange parse_range(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) invalid(path, "expected [min, max]");
  return {quantity(v[0], Dimension::temperature, path + "[0]"), quantity(v[1], Dimension::temperature, path + "[1]")};
}

int coefficient(const Json& obj, const std::string& path) {
  auto* c = optional_member(obj, "coefficient");
  if (!c) return 1;
  if (!c->is_number_integer() || c->get<std::int64_t>() < 1 || c->get<std::int64_t>() > 1000) {
    invalid(path + ".coefficient", "expected an integer >= 1");
  }
  return static_cast<int>(c->get<std::int64_t>());
}

void parse_reactions(const Json& j, Scenario& sc) {
  if (!j.is_array()) invalid("reactions", "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "reactions[" + std::to_string(i) + "]";
    const Json& r = j[i];
    expect_keys(r, {"id", "reactants", "products", "kinetics", "T_range", "clamp", "containers"}, path);
    ReactionTemplate tpl;
    tpl.id = text_at(r, "id", path);
    const Json& reactants = array_at(r, "reactants", path);
    for (std::size_t k = 0; k < reactants.size(); ++k) {
      const std::string rpath = path + ".reactants[" + std::to_string(k) + "]";
      expect_keys(reactants[k], {"species", "coefficient", "order"}, rpath);
      ReactantTerm term;
      term.species = text_at(reactants[k], "species", rpath);
      term.coefficient = coefficient(reactants[k], rpath);
      term.order = number(member(reactants[k], "order", rpath), rpath + ".order");
      tpl.reactants.push_back(std::move(term));
    }
    if (auto* products = optional_member(r, "products")) {
      if (!products->is_array()) invalid(path + ".products", "expected an array");
      for (std::size_t k = 0; k < products->size(); ++k) {
        const std::string ppath = path + ".products[" + std::to_string(k) + "]";
        expect_keys((*products)[k], {"species", "coefficient"}, ppath);
        tpl.products.push_back({text_at((*products)[k], "species", ppath), coefficient((*products)[k], ppath)});
      }
    }
    const Json& kin = member(r, "kinetics", path);
    const std::string kpath = path + ".kinetics";
    const std::string type = text_at(kin, "type", kpath);
    if (type == "constant") {
      expect_keys(kin, {"type", "k"}, kpath);
      tpl.kinetics = ConstantK{quantity_at(kin, "k", Dimension::rate, kpath)};
    } else if (type == "arrhenius") {
      expect_keys(kin, {"type", "A", "Ea"}, kpath);
      tpl.kinetics = Arrhenius{quantity_at(kin, "A", Dimension::rate, kpath),
                               quantity_at(kin, "Ea", Dimension::molar_energy, kpath)};
    } else {
      invalid(kpath + ".type", "expected \"constant\" or \"arrhenius\"");
    }
    if (auto* t = optional_member(r, "T_range")) tpl.temperature_window = parse_range(*t, path + ".T_range");
    if (auto* c = optional_member(r, "clamp")) tpl.arrhenius_clamp = parse_range(*c, path + ".clamp");
    if (auto* cs = optional_member(r, "containers")) {
      if (!cs->is_array()) invalid(path + ".containers", "expected an array");
      for (std::size_t k = 0; k < cs->size(); ++k) {
        tpl.containers.push_back(text((*cs)[k], path + ".containers[" + std::to_string(k) + "]"));
      }
    }
    try {
      validate_template(tpl);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::UnitError) throw;
      invalid(path, e.what());
    }
    sc.reactions.push_back(std::move(tpl));
  }
}

void parse_devices(const Json& j, Scenario& sc) {
  if (!j.is_array()) invalid("devices", "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "devices[" + std::to_string(i) + "]";
    const Json& d = j[i];
    expect_keys(d, {"id", "target", "flow_coefficient", "max_angle"}, path);
    FaucetSpec spec;
    spec.id = text_at(d, "id", path);
    spec.target = text_at(d, "target", path);
    spec.flow_coefficient = quantity_at(d, "flow_coefficient", Dimension::flow_coefficient, path);
    spec.max_angle = quantity_at(d, "max_angle", Dimension::angle, path);
    sc.faucets.push_back(std::move(spec));
  }
}

double duration_or(const Json& a, double fallback, const std::string& path) {
  auto* d = optional_member(a, "duration");
  return d ? quantity(*d, Dimension::time, path + ".duration") : fallback;
}

PrimitiveAction parse_action(const Json& a, const std::string& path) {
  const std::string type = text_at(a, "type", path);
  if (type == "wait") {
    expect_keys(a, {"type", "duration"}, path);
    return Wait{quantity_at(a, "duration", Dimension::time, path)};
  }
  if (type == "place") {
    expect_keys(a, {"type", "object", "surface", "duration"}, path);
    return Place{text_at(a, "object", path), text_at(a, "surface", path),
                 duration_or(a, kDefaultPlaceDuration, path)};
  }
  if (type == "pick") {
    expect_keys(a, {"type", "object", "surface", "duration"}, path);
    Pick p;
    p.object = text_at(a, "object", path);
    if (auto* s = optional_member(a, "surface")) p.surface = text(*s, path + ".surface");
    p.duration = duration_or(a, kDefaultPlaceDuration, path);
    return p;
  }
  if (type == "pour") {
    expect_keys(a, {"type", "src", "dst", "mass", "duration"}, path);
    return Pour{text_at(a, "src", path), text_at(a, "dst", path), quantity_at(a, "mass", Dimension::mass, path),
                duration_or(a, kDefaultPourDuration, path)};
  }
  if (type == "heater_set") {
    expect_keys(a, {"type", "heater", "on", "T_target"}, path);
    HeaterSet h;
    h.heater = text_at(a, "heater", path);
    h.on = boolean(member(a, "on", path), path + ".on");
    if (auto* t = optional_member(a, "T_target")) h.t_target = quantity(*t, Dimension::temperature, path + ".T_target");
    return h;
  }
  if (type == "liquid_handler") {
    expect_keys(a, {"type", "handler", "command", "target", "volume"}, path);
    LiquidHandlerAction lh;
    lh.handler = text_at(a, "handler", path);
    const std::string cmd = text_at(a, "command", path);
    auto op = parse_liquid_handler_op(cmd);
    if (!op) invalid(path + ".command", "unknown liquid handler command \"" + cmd + "\"");
    lh.command.op = *op;
    if (auto* t = optional_member(a, "target")) lh.command.target = text(*t, path + ".target");
    if (auto* v = optional_member(a, "volume")) lh.command.volume_ul = quantity(*v, Dimension::volume, path + ".volume");
    if (*op == LiquidHandlerOp::move_to && lh.command.target.empty()) invalid(path, "move_to needs a target");
    return lh;
  }
  if (type == "read_scale") {
    expect_keys(a, {"type", "scale", "label"}, path);
    ReadScale r;
    r.scale = text_at(a, "scale", path);
    if (auto* l = optional_member(a, "label")) r.label = text(*l, path + ".label");
    return r;
  }
  if (type == "set_knob") {
    expect_keys(a, {"type", "faucet", "angle"}, path);
    return SetKnob{text_at(a, "faucet", path), quantity_at(a, "angle", Dimension::angle, path)};
  }
  invalid(path + ".type", "unknown action \"" + type + "\"");
}

void parse_workflow(const Json& j, Scenario& sc) {
  const std::string path = "workflow";
  expect_keys(j, {"root", "nodes", "verify"}, path);
  sc.workflow.root = text_at(j, "root", path);
  const Json& nodes = array_at(j, "nodes", path);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string npath = path + ".nodes[" + std::to_string(i) + "]";
    const Json& n = nodes[i];
    expect_keys(n, {"id", "children", "action"}, npath);
    WorkflowNodeSpec node;
    node.id = text_at(n, "id", npath);
    if (auto* c = optional_member(n, "children")) {
      if (!c->is_array()) invalid(npath + ".children", "expected an array");
      for (std::size_t k = 0; k < c->size(); ++k) {
        node.children.push_back(text((*c)[k], npath + ".children[" + std::to_string(k) + "]"));
      }
    }
    if (auto* a = optional_member(n, "action")) node.action = parse_action(*a, npath + ".action");
    sc.workflow.nodes.push_back(std::move(node));
  }
  if (auto* v = optional_member(j, "verify")) {
    if (!v->is_array()) invalid(path + ".verify", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string tpath = path + ".verify[" + std::to_string(i) + "]";
      const Json& t = (*v)[i];
      expect_keys(t, {"container", "species", "kind", "threshold"}, tpath);
      VerificationTarget target;
      target.container = text_at(t, "container", tpath);
      target.species = text_at(t, "species", tpath);
      if (auto* k = optional_member(t, "kind")) {
        const std::string kind = text(*k, tpath + ".kind");
        auto parsed = parse_target_kind(kind);
        if (!parsed) invalid(tpath + ".kind", "unknown target kind \"" + kind + "\"");
        target.kind = *parsed;
      }
      const Json& threshold = member(t, "threshold", tpath);
      target.threshold = target.kind == TargetKind::below_fraction_of_peak
                             ? number(threshold, tpath + ".threshold")
                             : quantity(threshold, Dimension::molality, tpath + ".threshold");
      sc.targets.push_back(std::move(target));
    }
  }
}

void parse_trace(const Json& j, Scenario& sc) {
  expect_keys(j, {"stride", "record"}, "trace");
  if (auto* s = optional_member(j, "stride")) {
    sc.trace.stride = count(*s, "trace.stride");
    if (sc.trace.stride == 0) invalid("trace.stride", "must be >= 1");
  }
  if (auto* r = optional_member(j, "record")) {
    if (!r->is_array()) invalid("trace.record", "expected an array");
    for (std::size_t i = 0; i < r->size(); ++i) {
      const std::string path = "trace.record[" + std::to_string(i) + "]";
      sc.trace.columns.push_back(slot_key(text((*r)[i], path), path));
    }
  }
}

std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

std::vector<SlotId> trace_slots(const EnvironmentState& env, const TraceSpec& spec) {
  std::vector<SlotId> slots;
  for (const auto& key : spec.columns) slots.push_back(env.slot(env.entity_index(key.entity), key.slot));
  return slots;
}

// Default trace: every continuous and logical slot in registration order.
std::vector<SlotId> all_slots(const EnvironmentState& env) {
  std::vector<SlotId> slots;
  for (auto space : {SlotSpace::continuous, SlotSpace::logical}) {
    for (std::uint32_t i = 0; i < env.slot_count(space); ++i) slots.push_back({space, i});
  }
  return slots;
}

std::string column_name(const EnvironmentState& env, SlotId slot) {
  const auto& info = env.slot_info(slot);
  return env.entity(info.owner).id + "." + info.name + "[" + info.unit + "]";
}

}  // namespace

std::uint64_t Scenario::total_steps() const {
  return static_cast<std::uint64_t>(std::ceil(meta.duration / meta.dt - 1e-9));
}

EnvironmentState build_environment(const Scenario& sc) {
  EnvironmentState env(sc.meta.dt);
  env.set_rng_seed(sc.meta.seed);
  for (const auto& s : sc.species) env.declare_species(s.name, s.molar_mass);
  for (const auto& e : sc.entities) register_entity(env, e);
  for (const auto& m : sc.mixtures) write_mixture(env, m.holder, m.mixture);
  for (const auto& n : sc.thermal_nodes) {
    if (n.ambient) {
      add_ambient_node(env, n.entity, n.temperature, n.slot);
    } else {
      add_thermal_node(env, n.entity, n.mass, n.specific_heat, n.temperature, n.slot);
    }
  }
  for (auto link : sc.thermal_links) {
    if (auto* gen = std::get_if<Generation>(&link.params); gen && gen->gain == 0.0) {
      gen->gain = env.parameter(env.entity_index(gen->heater), "K_gen", 0.0);
    }
    if (link.gate && link.gate->slot.rfind("on:", 0) == 0) {
      install_contact(env, link.gate->entity, link.gate->slot.substr(3));
    }
    add_link(env, link);
  }
  for (const auto& r : sc.reactions) register_reaction(env, r);
  for (std::size_t e = 0; e < env.entity_count(); ++e) {
    const auto& spec = env.entity(e);
    switch (spec.kind) {
      case EntityKind::heater: install_heater(env, spec.id); break;
      case EntityKind::scale: install_scale(env, spec.id); break;
      case EntityKind::liquid_handler: install_liquid_handler(env, spec.id); break;
      case EntityKind::faucet: {
        auto it = std::find_if(sc.faucets.begin(), sc.faucets.end(), [&](const FaucetSpec& f) { return f.id == spec.id; });
        if (it == sc.faucets.end()) fail(ErrorCode::ValidationError, "faucet " + spec.id + " has no device entry");
        install_faucet(env, *it);
        break;
      }
      default: break;
    }
  }
  for (const auto& f : sc.faucets) {
    if (env.entity(env.entity_index(f.id)).kind != EntityKind::faucet) {
      fail(ErrorCode::ValidationError, "device entry " + f.id + " is not a faucet");
    }
  }
  return env;
}

Scenario parse_scenario(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::ParseError, line_column(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
  }
  Scenario sc;
  try {
    expect_keys(doc, {"meta", "species", "entities", "mixtures", "thermal", "reactions", "devices", "workflow", "trace"},
                "scenario");
    parse_meta(member(doc, "meta", "scenario"), sc);
    if (auto* v = optional_member(doc, "species")) parse_species(*v, sc);
    parse_entities(member(doc, "entities", "scenario"), sc);
    if (auto* v = optional_member(doc, "mixtures")) parse_mixtures(*v, sc);
    if (auto* v = optional_member(doc, "thermal")) parse_thermal(*v, sc);
    if (auto* v = optional_member(doc, "reactions")) parse_reactions(*v, sc);
    if (auto* v = optional_member(doc, "devices")) parse_devices(*v, sc);
    parse_workflow(member(doc, "workflow", "scenario"), sc);
    if (auto* v = optional_member(doc, "trace")) parse_trace(*v, sc);

    // Resolve every cross-reference once so run() cannot fail on them.
    EnvironmentState env = build_environment(sc);
    Workflow::build(env, sc.workflow);
    trace_slots(env, sc.trace);
    for (const auto& t : sc.targets) molality(env, t.container, t.species);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ValidationError || e.code() == ErrorCode::UnitError) throw;
    fail(ErrorCode::ValidationError, e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ValidationError, e.what());
  } catch (const std::exception& e) {
    fail(ErrorCode::ValidationError, e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

RunResult run(const Scenario& sc, const RunOptions& options) {
  RunResult out;
  EnvironmentState env = build_environment(sc);
  Workflow wf = Workflow::build(env, sc.workflow);
  const std::vector<SlotId> columns = sc.trace.columns.empty() ? all_slots(env) : trace_slots(env, sc.trace);
  const std::uint64_t stride = options.stride.value_or(sc.trace.stride);
  if (stride == 0) fail(ErrorCode::ValidationError, "trace stride must be >= 1");
  PeakTracker peaks;
  for (const auto& t : sc.targets) peaks.track(env, t.container, t.species);

  out.trace.columns.push_back("time_s");
  for (auto slot : columns) out.trace.columns.push_back(column_name(env, slot));
  auto record = [&] {
    std::vector<double> row;
    row.reserve(columns.size() + 1);
    row.push_back(env.time());
    for (auto slot : columns) row.push_back(env.value(slot));
    out.trace.rows.push_back(std::move(row));
  };
  record();

  const StepOptions step_options{true, sc.meta.integrator};
  const std::uint64_t steps = options.max_steps.value_or(sc.total_steps());
  const ActionVector idle;
  for (std::uint64_t k = 1; k <= steps; ++k) {
    TickResult tick = wf.tick(env);
    StepReport report;
    const ActionVector* applied = &tick.actions;
    try {
      report = step(env, tick.actions, step_options);
    } catch (const Error& e) {
      const bool action_error = e.code() == ErrorCode::PreconditionFailed || e.code() == ErrorCode::Overdraw ||
                                e.code() == ErrorCode::CapacityExceeded || e.code() == ErrorCode::NegativeMass;
      if (!action_error || tick.actions.empty()) fail(e.code(), "step " + std::to_string(k) + ": " + e.detail());
      // The step was rolled back; the leaf fails and the world carries on.
      wf.fail(env, e.what());
      applied = &idle;
      report = step(env, idle, step_options);
    }
    wf.observe(env, report);
    peaks.update(env);
    for (auto ev : report.fired_events) out.trace.events.push_back({env.time(), env.registry().events[ev].id});
    if (options.keep_actions) out.actions.push_back(*applied);
    if (options.keep_reports) out.reports.push_back(std::move(report));
    if (k % stride == 0) record();
  }

  wf.settle(env);
  if (!wf.terminated()) wf.fail(env, "duration elapsed before the workflow finished");
  out.report = verify(env, wf, sc.targets, &peaks);
  out.final_state = std::move(env);
  out.workflow = std::move(wf);
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string emit_trace(const Trace& trace, TraceFormat format) {
  std::string out;
  if (format == TraceFormat::csv) {
    for (std::size_t i = 0; i < trace.columns.size(); ++i) {
      if (i) out += ',';
      out += trace.columns[i];
    }
    out += '\n';
    for (const auto& row : trace.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += format_number(row[i]);
      }
      out += '\n';
    }
    return out;
  }
  auto emit_event = [&](const TraceEvent& e) {
    Json j;
    j["t"] = e.time;
    j["event"] = e.event;
    out += j.dump();
    out += '\n';
  };
  std::size_t next_event = 0;
  for (const auto& row : trace.rows) {
    while (next_event < trace.events.size() && trace.events[next_event].time <= row.front()) {
      emit_event(trace.events[next_event++]);
    }
    Json j = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) j[trace.columns[i]] = row[i];
    out += j.dump();
    out += '\n';
  }
  while (next_event < trace.events.size()) emit_event(trace.events[next_event++]);
  return out;
}

std::string describe(const Scenario& sc) {
  const EnvironmentState env = build_environment(sc);
  std::ostringstream os;
  os << "scenario " << (sc.meta.name.empty() ? "(unnamed)" : sc.meta.name) << "\n";
  os << "dt " << format_number(sc.meta.dt) << " s, duration " << format_number(sc.meta.duration) << " s, "
     << sc.total_steps() << " steps\n";
  os << "species";
  for (const auto& s : env.species()) os << ' ' << s;
  os << "\nslots x=" << env.slot_count(SlotSpace::kinematic) << " s=" << env.slot_count(SlotSpace::continuous)
     << " l=" << env.slot_count(SlotSpace::logical) << "\n";
  for (std::size_t e = 0; e < env.entity_count(); ++e) {
    const auto& spec = env.entity(e);
    os << "entity " << spec.id << " (" << to_string(spec.kind) << ")\n";
    for (auto space : {SlotSpace::kinematic, SlotSpace::continuous, SlotSpace::logical}) {
      for (std::uint32_t i = 0; i < env.slot_count(space); ++i) {
        const SlotId id{space, i};
        const auto& info = env.slot_info(id);
        if (info.owner != e) continue;
        const char tag = space == SlotSpace::kinematic ? 'x' : space == SlotSpace::continuous ? 's' : 'l';
        os << "  " << tag << '[' << i << "] " << info.name << " [" << info.unit << "] = " << format_number(env.value(id))
           << "\n";
      }
    }
  }
  for (const auto& p : env.registry().processes) os << "process " << p.id << "\n";
  for (const auto& ev : env.registry().events) os << "event " << ev.id << "\n";
  const double limit = stable_dt_limit(env);
  if (std::isfinite(limit)) {
    os << "euler stability limit dt < " << format_number(limit) << " s"
       << (sc.meta.dt < limit ? "" : " (VIOLATED)") << "\n";
  }
  return os.str();
}

}  // namespace labtwin
