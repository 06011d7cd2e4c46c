// mpgd: offline build, online assembly, vademecum and oracle runs.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <string>

#include "mpgd/io.hpp"
#include "mpgd/oracle.hpp"

namespace {

using namespace mpgd;

enum Exit { ok = 0, other = 1, schema = 2, unconverged = 3, range = 4 };

/// A JSON object given inline ("{...}") or as a file path.
Json json_argument(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') {
    try {
      return Json::parse(arg);
    } catch (const Json::exception& e) {
      throw SchemaError(std::string("inline JSON is malformed: ") + e.what());
    }
  }
  return read_json_file(arg);
}

/// Splits parameter values into globals and "module.parameter" overrides.
std::pair<Bindings, Bindings> split_parameters(const Bindings& all) {
  Bindings globals, overrides;
  for (const auto& [k, v] : all) (k.find('.') == std::string::npos ? globals : overrides)[k] = v;
  return {globals, overrides};
}

void write_text(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  body(os);
}

ProblemDefinition example(const std::string& name) {
  if (name == "lshape") return problems::lshape();
  if (name == "plate") return problems::plate();
  if (name == "chain") return problems::chain(4);
  if (name == "rod") return problems::rod();
  throw SchemaError("unknown example '" + name + "' (lshape, plate, chain, rod)");
}

void print_counts(const Catalog& cat) {
  const auto c = parameter_counts(cat.problem);
  for (const auto& r : cat.references)
    std::cout << r.name << ": rank " << r.tf.field.rank() << ", " << c.local.at(r.name) << " local parameters, " << c.coordinates.at(r.name)
              << " coordinates (" << c.nominal_dofs(r.name, 51) << " grid DOFs at 51 nodes each)" << (r.tf.converged ? "" : " (unconverged)") << '\n';
  std::cout << "global parameters: " << c.global << '\n';
}

int run_build(const std::string& problem_path, const std::string& out, std::size_t jobs) {
  const auto def = load_problem(problem_path);
  const auto cat = build_catalog(def, jobs, [](const std::string& line) { std::cerr << line << '\n'; });
  save_catalog(cat, out);
  print_counts(cat);
  if (!cat.converged()) {
    std::cerr << "warning: some transfer functions did not reach the stopping ratio\n";
    return unconverged;
  }
  return ok;
}

int run_assemble(const std::string& catalog, const std::string& params, const std::string& mode_name, bool warm, bool instant,
                 const std::string& vtk, const std::string& csv, const std::string& report) {
  const auto cat = load_catalog(catalog);
  const auto [globals, overrides] = split_parameters(bindings_from_json(json_argument(params)));
  const auto mode = coupling_mode_from_string(mode_name);
  if ((warm || instant) && !cat.vademecum) throw SchemaError("catalog has no vademecum; run 'mpgd vademecum' first");
  const auto start = std::chrono::steady_clock::now();
  const auto problem = online_problem(cat, globals, mode, overrides);
  Eigen::VectorXd lambda0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.size()));
  if (warm || instant) lambda0 = vademecum_eval(*cat.vademecum, globals);
  auto rep = instant ? evaluate_equilibrium(problem, lambda0) : newton_solve(problem, lambda0);
  const auto field = assemble_global(problem, rep.lambda);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!vtk.empty()) write_text(vtk, [&](std::ostream& os) { write_vtk(os, field, cat.problem.name); });
  if (!csv.empty()) write_text(csv, [&](std::ostream& os) { write_csv(os, field); });
  const auto j = to_json(rep, cat.problem);
  if (!report.empty()) write_text(report, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  else std::cout << j.dump(2) << '\n';
  if (!rep.converged) {
    std::cerr << "equilibrium not reached: " << rep.diagnostics << '\n';
    return unconverged;
  }
  return ok;
}

int run_vademecum(const std::string& catalog, const std::string& out, std::size_t samples, std::uint64_t seed, const std::string& mode_name) {
  auto cat = load_catalog(catalog);
  VademecumOptions opt;
  opt.samples = samples;
  opt.seed = seed;
  opt.mode = coupling_mode_from_string(mode_name);
  cat.vademecum = vademecum_build(cat, opt);
  save_catalog(cat, out.empty() ? catalog : out);
  std::cout << "samples " << samples << ", held-out RMS " << cat.vademecum->holdout_rms << " (relative " << cat.vademecum->holdout_relative << ")\n";
  if (!cat.vademecum->warning.empty()) std::cerr << "warning: " << cat.vademecum->warning << '\n';
  return ok;
}

int run_oracle(const std::string& problem_path, const std::string& params, const std::string& vtk, const std::string& csv) {
  const auto def = load_problem(problem_path);
  const auto [globals, overrides] = split_parameters(bindings_from_json(json_argument(params)));
  const auto field = solve_monolithic(def, globals, overrides);
  if (!vtk.empty()) write_text(vtk, [&](std::ostream& os) { write_vtk(os, field, def.name + " (monolithic)"); });
  if (!csv.empty()) write_text(csv, [&](std::ostream& os) { write_csv(os, field); });
  for (int c = 0; c < field.dofs_per_node; ++c)
    std::cout << field.components[static_cast<std::size_t>(c)] << " range [" << field.values.col(c).minCoeff() << ", " << field.values.col(c).maxCoeff() << "]\n";
  return ok;
}

/// Catalog against the monolithic solve at seeded random points inside the global ranges.
int run_validate(const std::string& catalog, std::size_t points, std::uint64_t seed, const std::string& out, double tolerance, const std::string& mode_name) {
  const auto cat = load_catalog(catalog);
  const auto mode = coupling_mode_from_string(mode_name);
  std::mt19937_64 rng(seed);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw Error("cannot write '" + out + "'");
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << std::setprecision(10) << "point";
  for (const auto& p : cat.problem.parameters) os << ',' << p.name;
  os << ",relative_l2,max_abs,relative_jump,iterations,converged,seconds\n";
  std::size_t failures = 0;
  for (std::size_t i = 0; i < points; ++i) {
    Bindings g;
    for (const auto& p : cat.problem.parameters) g[p.name] = std::uniform_real_distribution<double>(p.lower, p.upper)(rng);
    const auto start = std::chrono::steady_clock::now();
    const auto problem = online_problem(cat, g, mode);
    const auto rep = newton_solve(problem, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.size())));
    const auto field = assemble_global(problem, rep.lambda);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto c = compare(field, solve_monolithic(cat.problem, g));
    os << i;
    for (const auto& p : cat.problem.parameters) os << ',' << g[p.name];
    os << ',' << c.relative_l2 << ',' << c.max_abs << ',' << rep.relative_jump() << ',' << rep.iterations << ',' << rep.converged << ',' << seconds << '\n';
    if (!(c.relative_l2 <= tolerance) || !rep.converged) ++failures;
  }
  std::cerr << points - failures << " of " << points << " points within relative L2 " << tolerance << '\n';
  return failures ? other : ok;
}

/// Seeded snapshots of the assembled solution: one VTK file per point plus an index CSV.
int run_sweep(const std::string& catalog, std::size_t count, std::uint64_t seed, const std::string& dir, const std::string& mode_name) {
  const auto cat = load_catalog(catalog);
  const auto mode = coupling_mode_from_string(mode_name);
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::ofstream index(std::filesystem::path(dir) / "sweep.csv");
  if (!index) throw Error("cannot write into '" + dir + "'");
  index << std::setprecision(10) << "snapshot,file";
  for (const auto& p : cat.problem.parameters) index << ',' << p.name;
  index << ",iterations,relative_jump,converged\n";
  std::size_t unconverged_points = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Bindings g;
    for (const auto& p : cat.problem.parameters) g[p.name] = std::uniform_real_distribution<double>(p.lower, p.upper)(rng);
    const auto problem = online_problem(cat, g, mode);
    const auto rep = newton_solve(problem, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.size())));
    const auto file = "snapshot_" + std::to_string(i + 1) + ".vtk";
    std::ofstream vtk(std::filesystem::path(dir) / file);
    write_vtk(vtk, assemble_global(problem, rep.lambda), cat.problem.name + " snapshot " + std::to_string(i + 1));
    index << i + 1 << ',' << file;
    for (const auto& p : cat.problem.parameters) index << ',' << g[p.name];
    index << ',' << rep.iterations << ',' << rep.relative_jump() << ',' << rep.converged << '\n';
    unconverged_points += !rep.converged;
  }
  return unconverged_points ? unconverged : ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular parametric solutions: offline PGD catalogs and online interface equilibrium"};
  app.require_subcommand(1);

  std::string problem, catalog, out, params, vtk, csv, report, mode = "jump", name;
  std::size_t jobs = 0, samples = 500, points = 10, count = 6;
  std::uint64_t seed = 1;
  bool warm = false, instant = false;
  double tolerance = 0.05;

  auto* build = app.add_subcommand("build", "Solve every reference problem and write a catalog");
  build->add_option("--problem", problem, "Problem definition (JSON)")->required();
  build->add_option("--out", out, "Catalog file")->required();
  build->add_option("--jobs", jobs, "Parallel reference solves (0: all cores, capped by MPGD_THREADS)");

  auto* assemble = app.add_subcommand("assemble", "Equilibrate the interfaces at given parameters");
  assemble->add_option("--catalog", catalog, "Catalog file")->required();
  assemble->add_option("--params", params, "Parameter values: JSON file or inline object")->required();
  assemble->add_option("--mode", mode, "Coupling: jump or flux")->check(CLI::IsMember({"jump", "flux"}));
  assemble->add_flag("--warm-start", warm, "Start Newton from the vademecum prediction");
  assemble->add_flag("--instant", instant, "Use the vademecum prediction without Newton iterations");
  assemble->add_option("--out-vtk", vtk, "Assembled field (legacy VTK)");
  assemble->add_option("--out-csv", csv, "Assembled field (CSV node table)");
  assemble->add_option("--out-report", report, "Equilibrium report (JSON); stdout if omitted");

  auto* vade = app.add_subcommand("vademecum", "Fit the equilibrium coefficients over the design parameters");
  vade->add_option("--catalog", catalog, "Catalog file")->required();
  vade->add_option("--out", out, "Output catalog (default: overwrite)");
  vade->add_option("--samples", samples, "Latin-hypercube samples");
  vade->add_option("--seed", seed, "Sampling seed");
  vade->add_option("--mode", mode, "Coupling: jump or flux")->check(CLI::IsMember({"jump", "flux"}));

  auto* oracle = app.add_subcommand("oracle", "Monolithic finite-element solve of the glued problem");
  oracle->add_option("--problem", problem, "Problem definition (JSON)")->required();
  oracle->add_option("--params", params, "Parameter values: JSON file or inline object")->required();
  oracle->add_option("--out-vtk", vtk, "Field (legacy VTK)");
  oracle->add_option("--out-csv", csv, "Field (CSV node table)");

  auto* validate = app.add_subcommand("validate", "Compare catalog assemblies with monolithic solves at seeded points");
  validate->add_option("--catalog", catalog, "Catalog file")->required();
  validate->add_option("--points", points, "Number of random parameter points");
  validate->add_option("--seed", seed, "Sampling seed");
  validate->add_option("--out", out, "CSV of errors; stdout if omitted");
  validate->add_option("--tolerance", tolerance, "Relative L2 bound counted as a pass");
  validate->add_option("--mode", mode, "Coupling: jump or flux")->check(CLI::IsMember({"jump", "flux"}));

  auto* sweep = app.add_subcommand("sweep", "Export assembled snapshots at seeded parameter points");
  sweep->add_option("--catalog", catalog, "Catalog file")->required();
  sweep->add_option("--count", count, "Number of snapshots");
  sweep->add_option("--seed", seed, "Sampling seed");
  sweep->add_option("--out-dir", out, "Directory for the VTK files and sweep.csv")->required();
  sweep->add_option("--mode", mode, "Coupling: jump or flux")->check(CLI::IsMember({"jump", "flux"}));

  auto* ex = app.add_subcommand("example", "Write a bundled problem definition");
  ex->add_option("name", name, "lshape, plate, chain or rod")->required();
  ex->add_option("--out", out, "Output file; stdout if omitted");

  auto* info = app.add_subcommand("info", "Ranks and parameter counts of a catalog");
  info->add_option("--catalog", catalog, "Catalog file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : schema;
  }

  try {
    if (*build) return run_build(problem, out, jobs);
    if (*assemble) {
      if (warm && instant) throw SchemaError("--warm-start and --instant are exclusive");
      return run_assemble(catalog, params, mode, warm, instant, vtk, csv, report);
    }
    if (*vade) return run_vademecum(catalog, out, samples, seed, mode);
    if (*oracle) return run_oracle(problem, params, vtk, csv);
    if (*validate) return run_validate(catalog, points, seed, out, tolerance, mode);
    if (*sweep) return run_sweep(catalog, count, seed, out, mode);
    if (*ex) {
      const auto text = to_json(example(name)).dump(2) + "\n";
      if (out.empty()) std::cout << text;
      else write_file(out, text);
      return ok;
    }
    if (*info) {
      const auto cat = load_catalog(catalog);
      print_counts(cat);
      if (cat.vademecum)
        std::cout << "vademecum: " << cat.vademecum->samples << " samples, held-out relative RMS " << cat.vademecum->holdout_relative << '\n';
      return ok;
    }
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << '\n';
    return range;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return schema;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << '\n';
    return schema;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return unconverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return other;
  }
  return other;
}
