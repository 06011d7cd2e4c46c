#pragma once

// Offline products: one transfer function per reference problem (placed
// modules that share a reference share its solution) and an optional
// vademecum of equilibrium coefficients.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpgd/model.hpp"
#include "mpgd/regression.hpp"

namespace mpgd {

struct CompiledReference {
  std::string name;
  TransferFunction tf;
  double seconds = 0.0;
};

/// Equilibrium coefficients as affine functions of the load coefficients:
/// lambda(p, beta) = A_0(p) + sum_j beta_j A_j(p), each entry of A_t fitted over p.
struct Vademecum {
  std::vector<std::string> design;  // global parameters the fits depend on
  std::vector<std::string> loads;   // load coefficients
  std::size_t skeleton_size = 0;
  std::vector<SeparatedRegression> fits;  // (1 + loads) * skeleton_size, load-major
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double holdout_rms = 0.0;       // absolute RMS over held-out A entries
  double holdout_relative = 0.0;  // holdout_rms / RMS of the held-out A entries
  std::string warning;
};

inline Eigen::VectorXd vademecum_eval(const Vademecum& v, const Bindings& globals) {
  std::vector<double> x;
  for (const auto& n : v.design) {
    auto it = globals.find(n);
    if (it == globals.end()) throw SchemaError("missing value for parameter '" + n + "'");
    x.push_back(it->second);
  }
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(v.skeleton_size));
  for (std::size_t t = 0; t <= v.loads.size(); ++t) {
    double w = 1.0;
    if (t > 0) {
      auto it = globals.find(v.loads[t - 1]);
      if (it == globals.end()) throw SchemaError("missing value for parameter '" + v.loads[t - 1] + "'");
      w = it->second;
    }
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < v.skeleton_size; ++i) lambda(static_cast<Eigen::Index>(i)) += w * v.fits[t * v.skeleton_size + i].evaluate(x);
  }
  return lambda;
}

struct Catalog {
  ProblemDefinition problem;
  std::vector<CompiledReference> references;  // same order as problem.references
  std::optional<Vademecum> vademecum;

  const CompiledReference& reference_of(std::size_t module) const { return references.at(problem.reference_index(problem.modules[module].reference)); }
  bool converged() const {
    for (const auto& r : references)
      if (!r.tf.converged) return false;
    return true;
  }
};

/// Local parameter count of each reference (geometric, model and interface
/// coefficients) next to the number of global parameters.
struct ParameterCounts {
  std::map<std::string, std::size_t> local;
  std::map<std::string, std::size_t> coordinates;  // two spatial plus the parametric ones
  std::size_t global = 0;

  /// Size of the full tensor grid with `nodes` points per coordinate.
  double nominal_dofs(const std::string& reference, std::size_t nodes) const {
    return std::pow(static_cast<double>(nodes), static_cast<double>(coordinates.at(reference)));
  }
};

inline ParameterCounts parameter_counts(const ProblemDefinition& def) {
  ParameterCounts c;
  for (const auto& r : def.references) {
    c.local[r.name] = r.space(def.basis).size();
    c.coordinates[r.name] = r.separated_dimension(def.basis);
  }
  c.global = def.parameters.size();
  return c;
}

/// Worker count: `requested` (0 = hardware), capped by MPGD_THREADS.
inline std::size_t thread_limit(std::size_t requested = 0) {
  std::size_t n = requested ? requested : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MPGD_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, n);
}

/// Runs task(i) for i < count on up to `jobs` threads; rethrows the first failure.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex lock;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < count;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(jobs, count);
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

using BuildLog = std::function<void(const std::string&)>;

/// Offline stage: one PGD solve per reference problem, references in parallel.
inline Catalog build_catalog(const ProblemDefinition& def, std::size_t jobs = 0, const BuildLog& log = {}) {
  def.validate();
  Catalog cat;
  cat.problem = def;
  cat.references.resize(def.references.size());
  std::mutex log_lock;
  parallel_for(def.references.size(), thread_limit(jobs), [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const auto& ref = def.references[i];
    const auto model = build_reference_model(ref, def.basis);
    auto& out = cat.references[i];
    out.name = ref.name;
    out.tf = solve_reference(model, def.pgd);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) {
      std::lock_guard<std::mutex> g(log_lock);
      log(ref.name + ": rank " + std::to_string(out.tf.field.rank()) + (out.tf.converged ? "" : " (unconverged: " + out.tf.diagnostics + ")") + ", " +
          std::to_string(out.seconds) + " s");
    }
  });
  return cat;
}

}  // namespace mpgd
