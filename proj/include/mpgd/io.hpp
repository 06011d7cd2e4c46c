#pragma once

// Problem files (JSON), the binary catalog container and field/report export.
// Needs nlohmann/json on the include path.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpgd/assembly.hpp"
#include "mpgd/catalog.hpp"
#include "mpgd/model.hpp"

namespace mpgd {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON problem definitions.

namespace json_detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw SchemaError("unknown key '" + k + "' in " + where);
}

inline const Json& need(const Json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(where + " lacks '" + key + "'");
  return *it;
}

inline Json vec2(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Vec2 vec2(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw SchemaError(where + " must be a pair of numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Json affine(const AffineVec2& a) {
  Json terms = Json::object();
  for (const auto& [n, v] : a.terms) terms[n] = vec2(v);
  return {{"constant", vec2(a.constant)}, {"terms", terms}};
}

inline AffineVec2 affine(const Json& j, const std::string& where) {
  check_keys(j, {"constant", "terms"}, where);
  AffineVec2 a;
  if (j.contains("constant")) a.constant = vec2(j["constant"], where + ".constant");
  if (j.contains("terms"))
    for (const auto& [n, v] : j["terms"].items()) a.terms[n] = vec2(v, where + ".terms." + n);
  return a;
}

inline Json geometry(const GeometryParametrization& g) {
  Json cps = Json::array();
  for (const auto& c : g.control_points) cps.push_back(affine(c));
  Json params = Json::array();
  for (const auto& p : g.parameters) params.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}});
  return {{"degree", g.patch.degree}, {"knots", g.patch.knots}, {"weights", g.patch.weights}, {"control_points", cps}, {"parameters", params}};
}

inline GeometryParametrization geometry(const Json& j, const std::string& where) {
  check_keys(j, {"degree", "knots", "weights", "control_points", "parameters"}, where);
  GeometryParametrization g;
  g.patch.degree = need(j, "degree", where).get<std::array<int, 2>>();
  g.patch.knots = need(j, "knots", where).get<std::array<std::vector<double>, 2>>();
  g.patch.weights = need(j, "weights", where).get<std::vector<double>>();
  for (const auto& c : need(j, "control_points", where)) g.control_points.push_back(affine(c, where + ".control_points"));
  if (j.contains("parameters"))
    for (const auto& p : j["parameters"]) {
      check_keys(p, {"name", "lower", "upper"}, where + ".parameters");
      g.parameters.push_back({need(p, "name", where).get<std::string>(), need(p, "lower", where).get<double>(), need(p, "upper", where).get<double>()});
    }
  return g;
}

inline Json reference(const ReferenceProblem& r) {
  Json params = Json::array();
  for (const auto& p : r.parameters)
    params.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}, {"geometric_spacing", p.geometric_spacing}});
  Json dir = Json::array();
  for (const auto& d : r.dirichlet) dir.push_back({{"edge", to_string(d.edge)}, {"value", d.value}});
  Json slots = Json::array();
  for (const auto& s : r.slots)
    slots.push_back({{"name", s.name}, {"edge", to_string(s.edge)}, {"kind", to_string(s.kind)}, {"component", s.component}, {"lower", s.lower}, {"upper", s.upper}});
  return {{"name", r.name},
          {"physics", to_string(r.physics)},
          {"mesh", {r.n1, r.n2}},
          {"quadrature", r.quadrature},
          {"conductivity", r.conductivity},
          {"compression_tol", r.compression_tol},
          {"grid_points", r.grid_points},
          {"geometry", geometry(r.geometry)},
          {"parameters", params},
          {"dirichlet", dir},
          {"slots", slots}};
}

inline ReferenceProblem reference(const Json& j) {
  const std::string where = "reference problem";
  check_keys(j, {"name", "physics", "mesh", "quadrature", "conductivity", "compression_tol", "grid_points", "geometry", "parameters", "dirichlet", "slots"}, where);
  ReferenceProblem r;
  r.name = need(j, "name", where).get<std::string>();
  const std::string at = where + " '" + r.name + "'";
  r.physics = physics_from_string(j.value("physics", std::string("diffusion")));
  if (j.contains("mesh")) {
    const auto m = j["mesh"].get<std::array<std::size_t, 2>>();
    r.n1 = m[0];
    r.n2 = m[1];
  }
  r.quadrature = j.value("quadrature", r.quadrature);
  r.conductivity = j.value("conductivity", r.conductivity);
  r.compression_tol = j.value("compression_tol", r.compression_tol);
  r.grid_points = j.value("grid_points", r.grid_points);
  r.geometry = geometry(need(j, "geometry", at), at + ".geometry");
  if (j.contains("parameters"))
    for (const auto& p : j["parameters"]) {
      check_keys(p, {"name", "lower", "upper", "geometric_spacing"}, at + ".parameters");
      r.parameters.push_back({need(p, "name", at).get<std::string>(), need(p, "lower", at).get<double>(), need(p, "upper", at).get<double>(),
                              p.value("geometric_spacing", false)});
    }
  if (j.contains("dirichlet"))
    for (const auto& d : j["dirichlet"]) {
      check_keys(d, {"edge", "value"}, at + ".dirichlet");
      r.dirichlet.push_back({edge_from_string(need(d, "edge", at).get<std::string>()), d.value("value", 0.0)});
    }
  if (j.contains("slots"))
    for (const auto& s : j["slots"]) {
      check_keys(s, {"name", "edge", "kind", "component", "lower", "upper"}, at + ".slots");
      Slot sl;
      sl.name = need(s, "name", at).get<std::string>();
      sl.edge = edge_from_string(need(s, "edge", at).get<std::string>());
      sl.kind = slot_kind_from_string(s.value("kind", std::string("neumann")));
      sl.component = s.value("component", 0);
      sl.lower = s.value("lower", sl.lower);
      sl.upper = s.value("upper", sl.upper);
      r.slots.push_back(sl);
    }
  return r;
}

inline Json module(const ModuleSpec& m) {
  Json params = Json::object();
  for (const auto& [n, src] : m.parameters) params[n] = src.is_constant() ? Json(src.constant) : Json(src.global);
  return {{"name", m.name}, {"reference", m.reference}, {"angle", m.angle}, {"reflect", m.reflect}, {"translation", affine(m.translation)}, {"parameters", params}, {"loads", m.loads}};
}

inline ModuleSpec module(const Json& j) {
  check_keys(j, {"name", "reference", "angle", "reflect", "translation", "parameters", "loads"}, "module");
  ModuleSpec m;
  m.name = need(j, "name", "module").get<std::string>();
  const std::string at = "module '" + m.name + "'";
  m.reference = need(j, "reference", at).get<std::string>();
  m.angle = j.value("angle", 0.0);
  m.reflect = j.value("reflect", false);
  if (j.contains("translation")) m.translation = affine(j["translation"], at + ".translation");
  if (j.contains("parameters"))
    for (const auto& [n, v] : j["parameters"].items()) {
      if (v.is_string()) m.parameters[n] = {v.get<std::string>(), 0.0};
      else if (v.is_number()) m.parameters[n] = {"", v.get<double>()};
      else throw SchemaError(at + ": parameter '" + n + "' must be a global name or a number");
    }
  if (j.contains("loads")) m.loads = j["loads"].get<std::map<std::string, std::vector<std::string>>>();
  return m;
}

inline Json side(const InterfaceSide& s) { return {{"module", s.module}, {"slots", s.slots}}; }

inline InterfaceSide side(const Json& j, const std::string& where) {
  check_keys(j, {"module", "slots"}, where);
  return {need(j, "module", where).get<std::string>(), need(j, "slots", where).get<std::vector<std::string>>()};
}

}  // namespace json_detail

inline Json to_json(const ProblemDefinition& def) {
  using namespace json_detail;
  Json params = Json::array();
  for (const auto& p : def.parameters) params.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}});
  Json refs = Json::array(), mods = Json::array(), ifaces = Json::array();
  for (const auto& r : def.references) refs.push_back(reference(r));
  for (const auto& m : def.modules) mods.push_back(module(m));
  for (const auto& i : def.interfaces) ifaces.push_back({{"name", i.name}, {"l", side(i.l)}, {"m", side(i.m)}, {"reversed", i.reversed}});
  const auto& s = def.pgd;
  return {{"name", def.name},
          {"basis", {{"size", def.basis.size}, {"quadrature_points", def.basis.quadrature_points}}},
          {"pgd",
           {{"max_rank", s.max_rank},
            {"fixed_point_tol", s.fixed_point_tol},
            {"max_sweeps", s.max_sweeps},
            {"stop_ratio", s.stop_ratio},
            {"compression_tol", s.compression_tol},
            {"update_passes", s.update_passes},
            {"seed", s.seed}}},
          {"parameters", params},
          {"references", refs},
          {"modules", mods},
          {"interfaces", ifaces},
          {"constraints", def.constraints}};
}

/// Parses and validates a problem definition; every failure is a SchemaError.
inline ProblemDefinition problem_from_json(const Json& j) {
  using namespace json_detail;
  ProblemDefinition def;
  try {
    check_keys(j, {"name", "basis", "pgd", "parameters", "references", "modules", "interfaces", "constraints"}, "problem");
    def.name = j.value("name", std::string("problem"));
    if (j.contains("basis")) {
      check_keys(j["basis"], {"size", "quadrature_points"}, "basis");
      def.basis.size = j["basis"].value("size", def.basis.size);
      def.basis.quadrature_points = j["basis"].value("quadrature_points", def.basis.quadrature_points);
    }
    if (j.contains("pgd")) {
      const auto& p = j["pgd"];
      check_keys(p, {"max_rank", "fixed_point_tol", "max_sweeps", "stop_ratio", "compression_tol", "update_passes", "seed"}, "pgd");
      auto& s = def.pgd;
      s.max_rank = p.value("max_rank", s.max_rank);
      s.fixed_point_tol = p.value("fixed_point_tol", s.fixed_point_tol);
      s.max_sweeps = p.value("max_sweeps", s.max_sweeps);
      s.stop_ratio = p.value("stop_ratio", s.stop_ratio);
      s.compression_tol = p.value("compression_tol", s.compression_tol);
      s.update_passes = p.value("update_passes", s.update_passes);
      s.seed = p.value("seed", s.seed);
    }
    if (j.contains("parameters"))
      for (const auto& p : j["parameters"]) {
        check_keys(p, {"name", "lower", "upper"}, "parameter");
        def.parameters.push_back({need(p, "name", "parameter").get<std::string>(), need(p, "lower", "parameter").get<double>(),
                                  need(p, "upper", "parameter").get<double>()});
      }
    for (const auto& r : need(j, "references", "problem")) def.references.push_back(reference(r));
    for (const auto& m : need(j, "modules", "problem")) def.modules.push_back(module(m));
    if (j.contains("interfaces"))
      for (const auto& i : j["interfaces"]) {
        check_keys(i, {"name", "l", "m", "reversed"}, "interface");
        const std::string name = need(i, "name", "interface").get<std::string>();
        def.interfaces.push_back({name, side(need(i, "l", name), "interface '" + name + "'.l"), side(need(i, "m", name), "interface '" + name + "'.m"),
                                  i.value("reversed", false)});
      }
    if (j.contains("constraints")) def.constraints = j["constraints"].get<std::vector<std::vector<std::string>>>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed problem file: ") + e.what());
  }
  def.validate();
  return def;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ProblemDefinition load_problem(const std::string& path) { return problem_from_json(read_json_file(path)); }

/// Parameter values from a flat JSON object of numbers.
inline Bindings bindings_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("parameter values must be a JSON object");
  Bindings b;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw SchemaError("parameter '" + k + "' must be a number");
    b[k] = v.get<double>();
  }
  return b;
}

// ---------------------------------------------------------------------------
// Binary catalog: little-endian u64 lengths and IEEE-754 doubles, one
// FNV-1a checksummed blob per section.

inline constexpr std::uint64_t catalog_version = 1;
inline constexpr char catalog_magic[8] = {'M', 'P', 'G', 'D', 'C', 'A', 'T', '\0'};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) f64(m(r, c));
  }
  void blob(std::string_view payload) {
    str(payload);
    u64(fnv1a(payload));
  }
  void raw(std::string_view s) { out_.append(s); }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t size() {
    const auto n = u64();
    if (n > remaining()) throw FormatError("catalog length field exceeds the file");
    return static_cast<std::size_t>(n);
  }
  std::string str() { return std::string(take(size())); }
  std::vector<double> doubles() {
    const auto n = u64();
    if (n > remaining() / 8) throw FormatError("catalog length field exceeds the file");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = f64();
    return v;
  }
  Eigen::MatrixXd matrix() {
    const auto r = u64(), c = u64();
    if (r != 0 && c > remaining() / 8 / r) throw FormatError("catalog matrix exceeds the file");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = f64();
    return m;
  }
  /// Payload of a checksummed blob.
  std::string blob(const std::string& what) {
    std::string payload = str();
    if (u64() != fnv1a(payload)) throw FormatError("checksum mismatch in catalog section '" + what + "'");
    return payload;
  }
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw FormatError("catalog is truncated");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

namespace catalog_detail {

inline std::string encode(const CompiledReference& r) {
  ByteWriter w;
  w.str(r.name);
  w.u8(r.tf.converged ? 1 : 0);
  w.str(r.tf.diagnostics);
  w.u64(r.tf.history.size());
  for (const auto& h : r.tf.history) {
    w.str(h.group);
    w.u64(h.rank);
    w.f64(h.energy);
    w.f64(h.indicator);
    w.u64(h.sweeps);
  }
  w.u64(r.tf.field.mode_count());
  for (const auto& m : r.tf.field.modes()) {
    w.u8(m.kind == ModeKind::spatial ? 0 : 1);
    w.str(m.label);
    w.doubles(m.grid);
    w.matrix(m.terms);
  }
  return w.bytes();
}

inline CompiledReference decode_reference(std::string_view bytes) {
  ByteReader r(bytes);
  CompiledReference out;
  out.name = r.str();
  out.tf.converged = r.u8() != 0;
  out.tf.diagnostics = r.str();
  const auto nh = r.u64();
  for (std::uint64_t i = 0; i < nh; ++i) {
    EnrichmentRecord h;
    h.group = r.str();
    h.rank = r.u64();
    h.energy = r.f64();
    h.indicator = r.f64();
    h.sweeps = r.u64();
    out.tf.history.push_back(h);
  }
  const auto nm = r.u64();
  std::vector<Mode> modes;
  for (std::uint64_t i = 0; i < nm; ++i) {
    Mode m;
    m.kind = r.u8() == 0 ? ModeKind::spatial : ModeKind::parametric;
    m.label = r.str();
    m.grid = r.doubles();
    m.terms = r.matrix();
    modes.push_back(std::move(m));
  }
  if (r.remaining()) throw FormatError("trailing bytes in transfer function '" + out.name + "'");
  try {
    out.tf.field = SeparatedField(std::move(modes));
  } catch (const SchemaError& e) {
    throw FormatError("transfer function '" + out.name + "' is inconsistent: " + e.what());
  }
  return out;
}

inline void strings(ByteWriter& w, const std::vector<std::string>& v) {
  w.u64(v.size());
  for (const auto& s : v) w.str(s);
}

inline std::vector<std::string> strings(ByteReader& r) {
  std::vector<std::string> v(r.size());
  for (auto& s : v) s = r.str();
  return v;
}

inline std::string encode(const Vademecum& v) {
  ByteWriter w;
  strings(w, v.design);
  strings(w, v.loads);
  w.u64(v.skeleton_size);
  w.u64(v.samples);
  w.u64(v.seed);
  w.f64(v.holdout_rms);
  w.f64(v.holdout_relative);
  w.str(v.warning);
  w.u64(v.fits.size());
  for (const auto& f : v.fits) {
    w.doubles(f.lower);
    w.doubles(f.upper);
    w.str(std::string(f.logarithmic.begin(), f.logarithmic.end()));
    w.u64(f.degree);
    w.f64(f.constant);
    w.u64(f.factors.size());
    for (const auto& m : f.factors) w.matrix(m);
  }
  return w.bytes();
}

inline Vademecum decode_vademecum(std::string_view bytes) {
  ByteReader r(bytes);
  Vademecum v;
  v.design = strings(r);
  v.loads = strings(r);
  v.skeleton_size = r.u64();
  v.samples = r.u64();
  v.seed = r.u64();
  v.holdout_rms = r.f64();
  v.holdout_relative = r.f64();
  v.warning = r.str();
  const auto n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    SeparatedRegression f;
    f.lower = r.doubles();
    f.upper = r.doubles();
    const auto flags = r.str();
    f.logarithmic.assign(flags.begin(), flags.end());
    f.degree = r.u64();
    f.constant = r.f64();
    f.factors.resize(r.size());
    for (auto& m : f.factors) m = r.matrix();
    if (f.upper.size() != f.lower.size() || (!f.factors.empty() && f.factors.size() != f.lower.size()) || (!f.logarithmic.empty() && f.logarithmic.size() != f.lower.size()))
      throw FormatError("vademecum regression has inconsistent dimensions");
    for (const auto& m : f.factors)
      if (static_cast<std::size_t>(m.rows()) != f.degree + 1 || m.cols() != f.factors.front().cols())
        throw FormatError("vademecum regression has inconsistent factors");
    v.fits.push_back(std::move(f));
  }
  if (v.fits.size() != (1 + v.loads.size()) * v.skeleton_size) throw FormatError("vademecum holds the wrong number of regressions");
  if (r.remaining()) throw FormatError("trailing bytes in the vademecum section");
  return v;
}

}  // namespace catalog_detail

/// Serialized catalog. Build timings are not stored, so identical builds give identical bytes.
inline std::string encode_catalog(const Catalog& cat) {
  ByteWriter w;
  w.raw(std::string_view(catalog_magic, sizeof catalog_magic));
  w.u64(catalog_version);
  w.blob(to_json(cat.problem).dump());
  w.u64(cat.references.size());
  for (const auto& r : cat.references) w.blob(catalog_detail::encode(r));
  w.u8(cat.vademecum ? 1 : 0);
  if (cat.vademecum) w.blob(catalog_detail::encode(*cat.vademecum));
  return w.bytes();
}

inline Catalog decode_catalog(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < sizeof catalog_magic || r.take(sizeof catalog_magic) != std::string_view(catalog_magic, sizeof catalog_magic))
    throw FormatError("not an mpgd catalog");
  const auto version = r.u64();
  if (version != catalog_version)
    throw FormatError("unsupported catalog version " + std::to_string(version) + " (expected " + std::to_string(catalog_version) + ")");
  Catalog cat;
  const auto problem = r.blob("problem");
  try {
    cat.problem = problem_from_json(Json::parse(problem));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("catalog problem section is not JSON: ") + e.what());
  } catch (const SchemaError& e) {
    throw FormatError(std::string("catalog problem section is invalid: ") + e.what());
  }
  const auto n = r.u64();
  if (n != cat.problem.references.size()) throw FormatError("catalog holds " + std::to_string(n) + " transfer functions for " +
                                                            std::to_string(cat.problem.references.size()) + " reference problems");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto ref = catalog_detail::decode_reference(r.blob("reference " + std::to_string(i)));
    if (ref.name != cat.problem.references[i].name) throw FormatError("transfer function '" + ref.name + "' is out of order");
    cat.references.push_back(std::move(ref));
  }
  if (r.u8()) {
    cat.vademecum = catalog_detail::decode_vademecum(r.blob("vademecum"));
    if (cat.vademecum->skeleton_size != cat.problem.skeleton_size()) throw FormatError("vademecum does not match the skeleton");
  }
  if (r.remaining()) throw FormatError("trailing bytes after the catalog");
  return cat;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write '" + path + "'");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_catalog(const Catalog& cat, const std::string& path) { write_file(path, encode_catalog(cat)); }
inline Catalog load_catalog(const std::string& path) { return decode_catalog(read_file(path)); }

// ---------------------------------------------------------------------------
// Field and report export.

/// Legacy ASCII VTK unstructured grid of bilinear quads with one point array per component.
inline void write_vtk(std::ostream& os, const GlobalField& g, const std::string& title = "mpgd field") {
  const auto& m = g.mesh;
  os << std::setprecision(17);
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << m.points.size() << " double\n";
  for (const auto& p : m.points) os << p.x() << ' ' << p.y() << " 0\n";
  os << "CELLS " << m.cells.size() << ' ' << 5 * m.cells.size() << '\n';
  for (const auto& c : m.cells) os << "4 " << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << c[3] << '\n';
  os << "CELL_TYPES " << m.cells.size() << '\n';
  for (std::size_t i = 0; i < m.cells.size(); ++i) os << "9\n";
  os << "CELL_DATA " << m.cells.size() << "\nSCALARS module int 1\nLOOKUP_TABLE default\n";
  for (auto id : m.cell_module) os << id << '\n';
  os << "POINT_DATA " << m.points.size() << '\n';
  for (int c = 0; c < g.dofs_per_node; ++c) {
    os << "SCALARS " << g.components.at(static_cast<std::size_t>(c)) << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < g.values.rows(); ++i) os << g.values(i, c) << '\n';
  }
}

/// Node table: node, x, y and one column per component.
inline void write_csv(std::ostream& os, const GlobalField& g) {
  os << std::setprecision(17) << "node,x,y";
  for (const auto& c : g.components) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < g.mesh.points.size(); ++i) {
    os << i << ',' << g.mesh.points[i].x() << ',' << g.mesh.points[i].y();
    for (int c = 0; c < g.dofs_per_node; ++c) os << ',' << g.values(static_cast<Eigen::Index>(i), c);
    os << '\n';
  }
}

inline Json to_json(const EquilibriumReport& rep, const ProblemDefinition& def) {
  Json jumps = Json::object();
  for (std::size_t s = 0; s < rep.jumps.size() && s < def.interfaces.size(); ++s)
    jumps[def.interfaces[s].name] = {{"norm", rep.jumps[s]}, {"rms", rep.jump_rms[s]}};
  return {{"lambda", std::vector<double>(rep.lambda.data(), rep.lambda.data() + rep.lambda.size())},
          {"iterations", rep.iterations},
          {"residual_norms", rep.residual_norms},
          {"residual_scale", rep.residual_scale},
          {"jumps", jumps},
          {"field_range", rep.field_range},
          {"relative_jump", rep.relative_jump()},
          {"converged", rep.converged},
          {"clamped", rep.clamped},
          {"regularized", rep.regularized},
          {"seconds", rep.seconds},
          {"diagnostics", rep.diagnostics}};
}

}  // namespace mpgd
