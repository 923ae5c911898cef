#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "bilinear/designs.hpp"
#include "bilinear/harness.hpp"
#include "bilinear/io.hpp"
#include "bilinear/lowrank.hpp"

namespace {

using namespace bilinear;
using io::ConfigError;
using io::Json;

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    io::write_text_file(path, text);
  }
}

std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::string s = csv_header();
  for (const auto& r : rows) s += to_csv_line(r);
  return s;
}

// run-single and run-multi share the sweep schema, restricted to one family.
int run_family(const std::string& config, long seeds, const std::string& out, bool multi) {
  SweepConfig cfg = io::sweep_config_from_json(io::read_json_file(config));
  if (seeds > 0) cfg.seed_count = static_cast<std::size_t>(seeds);
  std::vector<Algo> keep;
  for (Algo a : cfg.algorithms)
    if (is_multi(a) == multi) keep.push_back(a);
  if (keep.empty()) keep.push_back(multi ? Algo::goblin_multi : Algo::goblin);
  cfg.algorithms = keep;
  for (auto m : cfg.grid.tasks)
    if ((m > 0) != multi)
      throw ConfigError(multi ? "run-multi: grid M values must be >= 1" : "run-single: grid M values must be 0");
  if (!out.empty()) cfg.output = out;
  const bool to_stdout = cfg.output.empty() || cfg.output == "-";
  if (to_stdout) cfg.output.clear();
  const auto rows = run_sweep(cfg);
  if (to_stdout) emit("", rows_csv(rows));
  return 0;
}

int cmd_design(const std::string& atoms_path, const std::string& kind, const std::string& reg_path,
               const std::string& out) {
  const std::vector<Vector> atoms = io::atoms_from_json(io::read_json_file(atoms_path));
  const int dim = static_cast<int>(atoms.front().size());
  Json result;
  if (kind == "e") {
    const Design d = e_optimal(atoms);
    result = io::to_json(d);
    result["kind"] = "e";
    result["lambda_min"] = min_eigenvalue_objective(atoms, d.weights);
  } else {
    // Without --reg the regularizer is negligible, which approximates the plain D-criterion.
    RegularizerSpec reg{1e-10, 1e-10, dim, dim};
    if (!reg_path.empty()) reg = io::regularizer_from_json(io::read_json_file(reg_path), dim);
    const Design d = frank_wolfe_logdet(atoms, reg, DirectionSet::pairwise(), 0.0);
    const Matrix a = information_matrix(atoms, d.weights) + reg.diagonal().asDiagonal().toDenseMatrix();
    const Matrix a_inv = a.inverse();
    double kw = 0.0;
    for (const auto& w : atoms) kw = std::max(kw, w.dot(a_inv * w));
    result = io::to_json(d);
    result["kind"] = "d";
    result["reg"] = io::to_json(reg);
    result["logdet"] = logdet_objective(atoms, d.weights, reg);
    result["max_leverage"] = kw;
  }
  emit(out, result.dump(2) + "\n");
  return 0;
}

int cmd_estimate(const std::string& batch_path, const std::string& backend, const std::string& out) {
  const Json j = io::read_json_file(batch_path);
  const SampleBatch batch = io::batch_from_json(j);
  const int d1 = static_cast<int>(batch.features.front().rows());
  const int d2 = static_cast<int>(batch.features.front().cols());
  EstimatorParams p;
  p.delta = j.value("delta", p.delta);
  p.s0 = j.value("s0", p.s0);
  p.score_bound_c = j.value("score_bound_c", GoblinConfig{}.score_bound_c);
  const double gamma = j.contains("gamma") ? j["gamma"].get<double>() : default_gamma(d1, d2, batch.size(), p);
  Json result{{"backend", backend}, {"gamma", gamma}};
  if (backend == "stein") {
    if (!batch.density) throw ConfigError("estimate: the stein backend needs a dither density in the batch");
    const double nu = j.contains("nu") ? j["nu"].get<double>() : default_nu(d1, d2, batch.size(), p);
    result["nu"] = nu;
    result["theta"] = io::to_json(stein_estimate(batch, {nu, gamma}));
  } else {
    ProxLsOptions opts;
    opts.iters = j.value("iters", opts.iters);
    const ProxLsResult r = prox_ls_estimate(batch, gamma, opts);
    result["theta"] = io::to_json(r.theta);
  }
  emit(out, result.dump(2) + "\n");
  return 0;
}

int cmd_aggregate(const std::string& in, const std::string& by, const std::string& out) {
  std::vector<std::string> keys;
  std::stringstream ss(by);
  for (std::string k; std::getline(ss, k, ',');)
    if (!k.empty()) keys.push_back(k);
  if (keys.empty()) throw ConfigError("aggregate: --by needs at least one column");
  for (const auto& k : keys) {
    const auto& cols = ResultRow::columns();
    if (std::find(cols.begin(), cols.end(), k) == cols.end()) throw ConfigError("aggregate: unknown column '" + k + "'");
  }
  const auto rows = read_csv(in);
  if (rows.empty()) throw ConfigError("aggregate: '" + in + "' has no rows");
  emit(out, summary_csv(aggregate(rows, keys), keys));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pure-exploration simulator for bilinear bandits"};
  app.require_subcommand(1);

  std::string config, out, atoms, kind = "d", reg, batch, backend = "prox-ls", in, by;
  long seeds = 0;

  auto* single = app.add_subcommand("run-single", "Single-task runs (goblin, rage)");
  single->add_option("--config", config, "Sweep-style JSON config")->required();
  single->add_option("--seeds", seeds, "Override the seed count")->check(CLI::PositiveNumber);
  single->add_option("--out", out, "CSV output path (default stdout)");

  auto* multi = app.add_subcommand("run-multi", "Multi-task runs (goblin-multi, doubexpdes)");
  multi->add_option("--config", config, "Sweep-style JSON config")->required();
  multi->add_option("--seeds", seeds, "Override the seed count")->check(CLI::PositiveNumber);
  multi->add_option("--out", out, "CSV output path (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "Full grid x algorithms x seeds");
  sweep->add_option("--config", config, "Sweep JSON config")->required();
  sweep->add_option("--out", out, "CSV output path")->required();

  auto* design = app.add_subcommand("design", "Solve an E- or regularized D-optimal design");
  design->add_option("--atoms", atoms, "JSON list of atom vectors")->required();
  design->add_option("--kind", kind, "e or d")->check(CLI::IsMember({"e", "d"}));
  design->add_option("--reg", reg, "Regularizer JSON {lam, lam_perp, k_eff}");
  design->add_option("--out", out, "JSON output path (default stdout)");

  auto* estimate = app.add_subcommand("estimate", "Low-rank estimate from a sample batch");
  estimate->add_option("--batch", batch, "Batch JSON {features, rewards, density?}")->required();
  estimate->add_option("--backend", backend, "stein or prox-ls")->check(CLI::IsMember({"stein", "prox-ls"}));
  estimate->add_option("--out", out, "JSON output path (default stdout)");

  auto* agg = app.add_subcommand("aggregate", "Group-by summary of a results CSV");
  agg->add_option("--in", in, "Results CSV")->required();
  agg->add_option("--by", by, "Comma-separated group columns")->required();
  agg->add_option("--out", out, "Summary CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*single) return run_family(config, seeds, out, false);
    if (*multi) return run_family(config, seeds, out, true);
    if (*sweep) {
      SweepConfig cfg = io::sweep_config_from_json(io::read_json_file(config));
      cfg.output = out;
      run_sweep(cfg);
      return 0;
    }
    if (*design) return cmd_design(atoms, kind, reg, out);
    if (*estimate) return cmd_estimate(batch, backend, out);
    if (*agg) return cmd_aggregate(in, by, out);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
