#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bilinear/baselines.hpp"
#include "bilinear/designs.hpp"
#include "bilinear/goblin.hpp"
#include "bilinear/harness.hpp"
#include "bilinear/instances.hpp"
#include "bilinear/io.hpp"
#include "bilinear/lowrank.hpp"
#include "bilinear/multitask.hpp"
#include "bilinear/rotation.hpp"

namespace py = pybind11;
using namespace bilinear;

namespace {

py::tuple pair_tuple(PairIndex p) { return py::make_tuple(p.left, p.right); }

py::dict phase_dict(const PhaseLog& l) {
  py::dict d;
  d["ell"] = l.ell;
  d["active_before"] = l.active_before;
  d["active_after"] = l.active_after;
  d["rho"] = l.rho;
  d["tau_e"] = l.tau_e;
  d["tau_g"] = l.tau_g;
  d["tau_g_prev"] = l.tau_g_prev;
  d["lam_perp"] = l.lam_perp;
  d["b_star"] = l.b_star;
  d["s_perp"] = l.s_perp;
  d["samples_stage1"] = l.samples_stage1;
  d["samples_stage2"] = l.samples_stage2;
  d["logdet_ratio"] = l.logdet_ratio;
  d["logdet_bound"] = l.logdet_bound;
  d["tail_energy"] = l.tail_energy;
  d["support"] = l.support;
  return d;
}

py::dict row_dict(const ResultRow& r) {
  py::dict d;
  for (const auto& c : ResultRow::columns()) d[py::str(c)] = r.field(c);
  return d;
}

std::vector<Vector> rows_to_vectors(const Matrix& m) {
  std::vector<Vector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pure-exploration bilinear bandit simulator";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "BilinearError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<SpanDeficient>(m, "SpanDeficient", PyExc_ValueError);

  py::class_<BilinearInstance>(m, "Instance")
      .def_property_readonly("theta", [](const BilinearInstance& i) { return i.theta; })
      .def_property_readonly("left", [](const BilinearInstance& i) { return i.arms.left; })
      .def_property_readonly("right", [](const BilinearInstance& i) { return i.arms.right; })
      .def_readonly("rank", &BilinearInstance::rank)
      .def_readonly("s_r", &BilinearInstance::s_r)
      .def_readonly("s0", &BilinearInstance::s0)
      .def_readonly("noise_sigma", &BilinearInstance::noise_sigma)
      .def("mean_reward", [](const BilinearInstance& i, std::size_t l, std::size_t r) { return i.mean_reward(PairIndex{l, r}); })
      .def("best_pair", [](const BilinearInstance& i) { return pair_tuple(best_pair(i)); })
      .def("min_gap", [](const BilinearInstance& i) { return min_gap(i); });

  m.def(
      "make_instance",
      [](const Matrix& left, const Matrix& right, const Matrix& theta, int rank, double noise_sigma) {
        return make_instance({rows_to_vectors(left), rows_to_vectors(right)}, theta, rank, noise_sigma);
      },
      py::arg("left"), py::arg("right"), py::arg("theta"), py::arg("rank"), py::arg("noise_sigma") = 1.0,
      "Instance from arm matrices (one arm per row) and theta.");

  m.def(
      "unit_ball_instance",
      [](int d1, int d2, int rank, std::size_t n_left, std::size_t n_right, double s_r, double noise_sigma,
         std::uint64_t seed) {
        UnitBallSpec s{d1, d2, rank, n_left, n_right, s_r, noise_sigma, NoiseKind::gaussian};
        return gen_unit_ball_instance(s, seed);
      },
      py::arg("d1") = 6, py::arg("d2") = 6, py::arg("rank") = 2, py::arg("n_left") = 10, py::arg("n_right") = 10,
      py::arg("s_r") = 0.7071067811865476, py::arg("noise_sigma") = 1.0, py::arg("seed") = 0);

  py::class_<MultiTaskInstance>(m, "MultiTaskInstance")
      .def_property_readonly("b1", [](const MultiTaskInstance& i) { return i.b1; })
      .def_property_readonly("b2", [](const MultiTaskInstance& i) { return i.b2; })
      .def_property_readonly("num_tasks", &MultiTaskInstance::num_tasks)
      .def("theta", &MultiTaskInstance::theta)
      .def("task", &MultiTaskInstance::task);

  m.def(
      "multitask_instance",
      [](std::size_t tasks, int d1, int d2, int k1, int k2, int r, std::size_t n_left, std::size_t n_right,
         double s_r, double noise_sigma, double c0, std::uint64_t seed) {
        MultiTaskOptions o;
        o.n_left = n_left;
        o.n_right = n_right;
        o.s_r = s_r;
        o.noise_sigma = noise_sigma;
        o.c0 = c0;
        Rng rng(seed);
        return gen_multitask(tasks, d1, d2, k1, k2, r, rng, o);
      },
      py::arg("tasks"), py::arg("d1") = 8, py::arg("d2") = 8, py::arg("k1") = 4, py::arg("k2") = 4,
      py::arg("r") = 2, py::arg("n_left") = 10, py::arg("n_right") = 10, py::arg("s_r") = 0.7071067811865476,
      py::arg("noise_sigma") = 1.0, py::arg("c0") = 0.1, py::arg("seed") = 0);

  py::class_<GoblinConfig>(m, "GoblinConfig")
      .def(py::init<>())
      .def_readwrite("delta", &GoblinConfig::delta)
      .def_readwrite("c_tau", &GoblinConfig::c_tau)
      .def_readwrite("c_tau_e", &GoblinConfig::c_tau_e)
      .def_readwrite("lam", &GoblinConfig::lam)
      .def_readwrite("score_bound_c", &GoblinConfig::score_bound_c)
      .def_readwrite("prox_iters", &GoblinConfig::prox_iters)
      .def_readwrite("delta_floor", &GoblinConfig::delta_floor)
      .def_readwrite("phase_slack", &GoblinConfig::phase_slack)
      .def_readwrite("max_total_samples", &GoblinConfig::max_total_samples)
      .def_property(
          "backend", [](const GoblinConfig& c) { return to_string(c.backend); },
          [](GoblinConfig& c, const std::string& s) { c.backend = backend_from_string(s); });

  py::class_<RunRecord>(m, "RunRecord")
      .def_property_readonly("identified", [](const RunRecord& r) { return pair_tuple(r.identified); })
      .def_readonly("success", &RunRecord::success)
      .def_readonly("phases", &RunRecord::phases)
      .def_readonly("samples_stage1", &RunRecord::samples_stage1)
      .def_readonly("samples_stage2", &RunRecord::samples_stage2)
      .def_readonly("samples_stage3", &RunRecord::samples_stage3)
      .def_readonly("total", &RunRecord::total)
      .def_readonly("oracle_draws", &RunRecord::oracle_draws)
      .def_readonly("cap_exceeded", &RunRecord::cap_exceeded)
      .def_property_readonly("phase_log", [](const RunRecord& r) {
        py::list out;
        for (const auto& l : r.per_phase_log) out.append(phase_dict(l));
        return out;
      });

  py::class_<MultiRunRecord>(m, "MultiRunRecord")
      .def_readonly("per_task", &MultiRunRecord::per_task)
      .def_readonly("samples_stage1_shared", &MultiRunRecord::samples_stage1_shared)
      .def_readonly("samples_stage2", &MultiRunRecord::samples_stage2)
      .def_readonly("samples_stage3", &MultiRunRecord::samples_stage3)
      .def_readonly("total", &MultiRunRecord::total)
      .def_readonly("oracle_draws", &MultiRunRecord::oracle_draws)
      .def_readonly("phases", &MultiRunRecord::phases)
      .def_readonly("stage1_per_task_by_phase", &MultiRunRecord::stage1_per_task_by_phase)
      .def("all_success", &MultiRunRecord::all_success);

  m.def(
      "run_single",
      [](const BilinearInstance& inst, const GoblinConfig& cfg, std::uint64_t seed) {
        Rng rng(seed);
        py::gil_scoped_release release;
        return run_single(inst, cfg, rng);
      },
      py::arg("instance"), py::arg("config") = GoblinConfig{}, py::arg("seed") = 0);
  m.def(
      "run_rage_ambient",
      [](const BilinearInstance& inst, const GoblinConfig& cfg, std::uint64_t seed) {
        Rng rng(seed);
        py::gil_scoped_release release;
        return run_rage_ambient(inst, cfg, rng);
      },
      py::arg("instance"), py::arg("config") = GoblinConfig{}, py::arg("seed") = 0);
  m.def(
      "run_multi",
      [](const MultiTaskInstance& inst, const GoblinConfig& cfg, std::uint64_t seed, bool inject) {
        Rng rng(seed);
        py::gil_scoped_release release;
        return run_multi(inst, {cfg, inject}, rng);
      },
      py::arg("instance"), py::arg("config") = GoblinConfig{}, py::arg("seed") = 0,
      py::arg("inject_exact_extractors") = false);
  m.def(
      "run_doubexpdes_like",
      [](const MultiTaskInstance& inst, const GoblinConfig& cfg, std::uint64_t seed, bool inject) {
        Rng rng(seed);
        py::gil_scoped_release release;
        return run_doubexpdes_like(inst, {cfg, inject}, rng);
      },
      py::arg("instance"), py::arg("config") = GoblinConfig{}, py::arg("seed") = 0,
      py::arg("inject_exact_extractors") = false);

  m.def(
      "e_optimal",
      [](const Matrix& atoms) {
        const Design d = e_optimal(rows_to_vectors(atoms));
        return py::make_tuple(d.weights, d.objective);
      },
      py::arg("atoms"), "E-optimal weights for atoms given one per row; returns (weights, lambda_min).");
  m.def(
      "d_optimal",
      [](const Matrix& atoms, double lam, double lam_perp, int k_eff) {
        const int p = static_cast<int>(atoms.cols());
        const RegularizerSpec reg{lam, lam_perp > 0.0 ? lam_perp : lam, k_eff > 0 ? k_eff : p, p};
        const Design d = frank_wolfe_logdet(rows_to_vectors(atoms), reg, DirectionSet::pairwise(), 0.0);
        return py::make_tuple(d.weights, d.objective);
      },
      py::arg("atoms"), py::arg("lam") = 1e-10, py::arg("lam_perp") = 0.0, py::arg("k_eff") = 0,
      "Regularized D-optimal weights; returns (weights, log det ratio).");

  m.def("svt", &svt, py::arg("m"), py::arg("threshold"));
  m.def(
      "prox_ls_estimate",
      [](const std::vector<Matrix>& features, const std::vector<double>& rewards, double gamma, int iters) {
        SampleBatch b{features, rewards, std::nullopt};
        ProxLsOptions o;
        o.iters = iters;
        return prox_ls_estimate(b, gamma, o).theta;
      },
      py::arg("features"), py::arg("rewards"), py::arg("gamma"), py::arg("iters") = 2000);

  py::class_<RotationMap>(m, "RotationMap")
      .def_readonly("u_hat", &RotationMap::u_hat)
      .def_readonly("v_hat", &RotationMap::v_hat)
      .def_readonly("k_eff", &RotationMap::k_eff)
      .def("rotate_pair", [](const RotationMap& map, const Vector& x, const Vector& z) { return rotate_pair(map, x, z); })
      .def("rotate_theta", [](const RotationMap& map, const Matrix& t) { return rotate_theta(map, t); })
      .def("tail_energy", [](const RotationMap& map, const Matrix& t) { return tail_energy(map, t); });
  m.def("build_rotation", &build_rotation, py::arg("theta_hat"), py::arg("r"));

  m.def(
      "run_sweep_json",
      [](const std::string& text) {
        const SweepConfig cfg = io::sweep_config_from_json(io::Json::parse(text));
        std::vector<ResultRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_sweep(cfg);
        }
        py::list out;
        for (const auto& r : rows) out.append(row_dict(r));
        return out;
      },
      py::arg("config_json"), "Runs a sweep from a JSON document; rows come back as dicts of strings.");
  m.def("csv_header", &csv_header);
}
