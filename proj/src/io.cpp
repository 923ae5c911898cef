#include "bilinear/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace bilinear::io {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

template <class T>
std::vector<T> list_or(const Json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw ConfigError("matrix: expected a list of rows");
  const auto rows = j.size();
  const auto cols = j.front().size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError("matrix: ragged rows");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ConfigError("matrix: non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("vector: expected a non-empty list");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("vector: non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

namespace {

std::vector<Vector> vectors_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + ": expected a non-empty list of vectors");
  std::vector<Vector> out;
  for (const auto& v : j) out.push_back(vector_from_json(v));
  return out;
}

}  // namespace

Json to_json(const BilinearInstance& inst) {
  Json left = Json::array(), right = Json::array();
  for (const auto& x : inst.arms.left) left.push_back(to_json(x));
  for (const auto& z : inst.arms.right) right.push_back(to_json(z));
  return Json{{"left", left},
              {"right", right},
              {"theta", to_json(inst.theta)},
              {"rank", inst.rank},
              {"noise_sigma", inst.noise_sigma},
              {"noise", inst.noise == NoiseKind::gaussian ? "gaussian" : "rademacher"},
              {"seed", inst.seed}};
}

BilinearInstance instance_from_json(const Json& j) {
  check_keys(j, {"left", "right", "theta", "rank", "noise_sigma", "noise", "seed"}, "instance");
  if (!j.contains("left") || !j.contains("right") || !j.contains("theta") || !j.contains("rank"))
    throw ConfigError("instance: needs left, right, theta and rank");
  ArmSet arms{vectors_from_json(j["left"], "left"), vectors_from_json(j["right"], "right")};
  BilinearInstance inst =
      make_instance(std::move(arms), matrix_from_json(j["theta"]), get_or<int>(j, "rank", 1),
                    get_or<double>(j, "noise_sigma", 1.0));
  const std::string noise = get_or<std::string>(j, "noise", "gaussian");
  if (noise == "rademacher") inst.noise = NoiseKind::rademacher;
  else if (noise != "gaussian") throw ConfigError("instance: noise must be gaussian or rademacher");
  inst.seed = get_or<std::uint64_t>(j, "seed", 0);
  return inst;
}

Json to_json(const Design& d) {
  return Json{{"weights", to_json(d.weights)},
              {"converged", d.converged},
              {"iterations", d.iterations},
              {"objective", d.objective},
              {"support_size", d.support_size()}};
}

Json to_json(const RegularizerSpec& r) {
  return Json{{"lam", r.lam}, {"lam_perp", r.lam_perp}, {"k_eff", r.k_eff}, {"p_dim", r.p_dim}};
}

RegularizerSpec regularizer_from_json(const Json& j, int p_dim) {
  check_keys(j, {"lam", "lam_perp", "k_eff", "p_dim"}, "reg");
  RegularizerSpec r;
  r.lam = get_or<double>(j, "lam", 1.0);
  r.lam_perp = get_or<double>(j, "lam_perp", r.lam);
  r.p_dim = get_or<int>(j, "p_dim", p_dim);
  r.k_eff = get_or<int>(j, "k_eff", r.p_dim);
  if (r.p_dim != p_dim) throw ConfigError("reg: p_dim does not match the atom dimension");
  r.validate();
  return r;
}

std::vector<Vector> atoms_from_json(const Json& j) {
  const Json& list = j.is_object() ? j.at("atoms") : j;
  std::vector<Vector> atoms = vectors_from_json(list, "atoms");
  for (const auto& a : atoms)
    if (a.size() != atoms.front().size()) throw ConfigError("atoms: ragged dimensions");
  return atoms;
}

Json to_json(const SampleBatch& b) {
  Json feats = Json::array();
  for (const auto& f : b.features) feats.push_back(to_json(f));
  Json out{{"features", feats}, {"rewards", b.rewards}};
  if (b.density) {
    Json centers = Json::array();
    for (const auto& c : b.density->centers) centers.push_back(to_json(c));
    out["density"] = Json{{"centers", centers}, {"variance", b.density->variance}};
  }
  return out;
}

SampleBatch batch_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("features") || !j.contains("rewards"))
    throw ConfigError("batch: needs features and rewards");
  SampleBatch b;
  for (const auto& f : j["features"]) b.features.push_back(matrix_from_json(f));
  try {
    b.rewards = j["rewards"].get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("batch rewards: ") + e.what());
  }
  if (j.contains("density")) {
    const Json& d = j["density"];
    DitherDensity dens;
    dens.variance = get_or<double>(d, "variance", 1.0);
    for (const auto& c : d.at("centers")) dens.centers.push_back(matrix_from_json(c));
    b.density = std::move(dens);
  }
  b.validate();
  return b;
}

GoblinConfig goblin_config_from_json(const Json& j, GoblinConfig c) {
  check_keys(j,
             {"delta", "c_tau", "c_tau_e", "lam", "tau_g_constant", "k_override", "backend", "score_bound_c",
              "dither_variance", "prox_iters", "e_optimal_iters", "fw_max_iters", "fw_eps", "fw_line_search",
              "fw_bound_target", "rho_refinements", "prune_relative", "delta_floor", "phase_slack",
              "max_total_samples"},
             "algorithm");
  c.delta = get_or(j, "delta", c.delta);
  c.c_tau = get_or(j, "c_tau", c.c_tau);
  c.c_tau_e = get_or(j, "c_tau_e", c.c_tau_e);
  c.lam = get_or(j, "lam", c.lam);
  c.tau_g_constant = get_or(j, "tau_g_constant", c.tau_g_constant);
  c.k_override = get_or(j, "k_override", c.k_override);
  if (j.contains("backend")) c.backend = backend_from_string(get_or<std::string>(j, "backend", ""));
  c.score_bound_c = get_or(j, "score_bound_c", c.score_bound_c);
  c.dither_variance = get_or(j, "dither_variance", c.dither_variance);
  c.prox_iters = get_or(j, "prox_iters", c.prox_iters);
  c.e_opts.iters = get_or(j, "e_optimal_iters", c.e_opts.iters);
  c.fw_opts.max_iters = get_or(j, "fw_max_iters", c.fw_opts.max_iters);
  c.fw_opts.eps = get_or(j, "fw_eps", c.fw_opts.eps);
  c.fw_opts.line_search = get_or(j, "fw_line_search", c.fw_opts.line_search);
  c.fw_bound_target = get_or(j, "fw_bound_target", c.fw_bound_target);
  c.rho_refinements = get_or(j, "rho_refinements", c.rho_refinements);
  c.prune_relative = get_or(j, "prune_relative", c.prune_relative);
  c.delta_floor = get_or(j, "delta_floor", c.delta_floor);
  c.phase_slack = get_or(j, "phase_slack", c.phase_slack);
  c.max_total_samples = get_or(j, "max_total_samples", c.max_total_samples);
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("algorithm: delta must be in (0,1)");
  if (!(c.c_tau > 0.0) || c.c_tau_e < 0.0) throw ConfigError("algorithm: c_tau must be positive");
  if (!(c.lam > 0.0)) throw ConfigError("algorithm: lam must be positive");
  if (!(c.score_bound_c > 0.0)) throw ConfigError("algorithm: score_bound_c must be positive");
  return c;
}

SweepConfig sweep_config_from_json(const Json& j) {
  check_keys(j, {"name", "grid", "algorithms", "algorithm", "c_tau", "seeds", "master_seed", "output", "multitask_c0"},
             "sweep");
  SweepConfig s;
  s.name = get_or<std::string>(j, "name", s.name);
  if (j.contains("grid")) {
    const Json& g = j["grid"];
    check_keys(g, {"d1", "d2", "r", "n_left", "n_right", "M", "k1", "k2", "s_r", "noise_sigma", "square", "paired_arms"}, "grid");
    auto& G = s.grid;
    G.d1 = list_or(g, "d1", G.d1);
    G.square = get_or(g, "square", false);
    G.paired_arms = get_or(g, "paired_arms", false);
    G.d2 = list_or(g, "d2", G.square ? std::vector<int>{} : G.d1);
    G.r = list_or(g, "r", G.r);
    G.n_left = list_or(g, "n_left", G.n_left);
    G.n_right = list_or(g, "n_right", G.n_right);
    G.tasks = list_or(g, "M", G.tasks);
    G.k1 = list_or(g, "k1", G.k1);
    G.k2 = list_or(g, "k2", G.k2);
    G.s_r = list_or(g, "s_r", G.s_r);
    G.noise_sigma = list_or(g, "noise_sigma", G.noise_sigma);
  }
  if (j.contains("algorithms")) {
    s.algorithms.clear();
    for (const auto& a : list_or<std::string>(j, "algorithms", {})) s.algorithms.push_back(algo_from_string(a));
  }
  if (j.contains("algorithm")) s.base = goblin_config_from_json(j["algorithm"], s.base);
  if (j.contains("c_tau")) {
    const Json& c = j["c_tau"];
    if (c.is_number()) {
      s.base.c_tau = c.get<double>();
    } else if (c.is_object()) {
      for (const auto& [k, v] : c.items()) {
        if (!v.is_number()) throw ConfigError("c_tau." + k + " must be a number");
        s.c_tau[algo_from_string(k)] = v.get<double>();
      }
    } else {
      throw ConfigError("c_tau must be a number or an object keyed by algorithm");
    }
  }
  if (j.contains("seeds")) {
    const Json& sd = j["seeds"];
    if (sd.is_number_integer()) {
      if (sd.get<long>() < 1) throw ConfigError("seeds must be >= 1");
      s.seed_count = sd.get<std::size_t>();
    } else {
      check_keys(sd, {"count", "master"}, "seeds");
      if (get_or<long>(sd, "count", 1) < 1) throw ConfigError("seeds.count must be >= 1");
      s.seed_count = get_or<std::size_t>(sd, "count", 1);
      s.master_seed = get_or<std::uint64_t>(sd, "master", s.master_seed);
    }
  }
  s.master_seed = get_or<std::uint64_t>(j, "master_seed", s.master_seed);
  s.output = get_or<std::string>(j, "output", s.output);
  s.multitask_c0 = get_or(j, "multitask_c0", s.multitask_c0);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

}  // namespace bilinear::io
