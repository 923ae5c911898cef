#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bilinear/goblin.hpp"
#include "bilinear/instances.hpp"

namespace bilinear {

enum class Algo { goblin, rage, goblin_multi, doubexpdes };

std::string to_string(Algo a);
Algo algo_from_string(const std::string& s);
bool is_multi(Algo a);

struct InstanceGrid {
  std::vector<int> d1{6};
  std::vector<int> d2{6};
  std::vector<int> r{2};
  std::vector<std::size_t> n_left{10};
  std::vector<std::size_t> n_right{10};
  std::vector<std::size_t> tasks{0};  // 0 marks a single-task grid point
  std::vector<int> k1{4};
  std::vector<int> k2{4};
  std::vector<double> s_r{0.7071067811865476};
  std::vector<double> noise_sigma{1.0};
  /// Tie d2 to d1 instead of crossing the two lists.
  bool square = false;
  /// Tie n_right to n_left instead of crossing the two lists.
  bool paired_arms = false;
};

/// One point of the instance grid.
struct GridPoint {
  int d1 = 6;
  int d2 = 6;
  int r = 2;
  std::size_t n_left = 10;
  std::size_t n_right = 10;
  std::size_t tasks = 0;
  int k1 = 4;
  int k2 = 4;
  double s_r = 0.7071067811865476;
  double noise_sigma = 1.0;

  /// Stable hash of the parameter values; seeds derive from it, not from grid position.
  std::uint64_t key() const;
};

struct SweepConfig {
  std::string name = "sweep";
  InstanceGrid grid{};
  std::vector<Algo> algorithms{Algo::goblin};
  GoblinConfig base{};
  /// Per-algorithm override of base.c_tau.
  std::map<Algo, double> c_tau{};
  std::size_t seed_count = 1;
  std::uint64_t master_seed = 1;
  std::string output;
  double multitask_c0 = 0.1;

  void validate() const;
  std::vector<GridPoint> points() const;
  GoblinConfig config_for(Algo a) const;
};

struct ResultRow {
  std::uint64_t seed = 0;
  std::string algo;
  int d1 = 0;
  int d2 = 0;
  int r = 0;
  std::size_t n_left_arms = 0;
  std::size_t n_right_arms = 0;
  std::size_t M = 0;
  double delta = 0.0;
  double c_tau = 0.0;
  long samples_stage1 = 0;
  long samples_stage2 = 0;
  long samples_stage3 = 0;
  long total_samples = 0;
  int phases = 0;
  int success = 0;
  double min_gap = 0.0;
  double wallclock_ms = 0.0;
  /// "all" for single-task and multi-task summary rows, else the task index.
  std::string task = "all";
  std::string error;
  /// Reward-oracle invocations counted independently of the run record.
  long oracle_draws = 0;

  static const std::vector<std::string>& columns();
  std::string field(const std::string& column) const;
};

std::string csv_header();
std::string to_csv_line(const ResultRow& row);
std::vector<ResultRow> read_csv(const std::string& path);
std::vector<ResultRow> parse_csv(const std::string& text);

/// Worker count: BILIN_THREADS if set, else hardware concurrency, capped by `cells`.
std::size_t worker_count(std::size_t cells);

/// Runs grid x algorithms x seeds. Rows are committed in cell order, so the
/// file is always a valid prefix and its content is independent of scheduling.
std::vector<ResultRow> run_sweep(const SweepConfig& cfg);

/// Rows for one (grid point, algorithm, seed index) cell.
std::vector<ResultRow> run_cell(const SweepConfig& cfg, const GridPoint& pt, Algo algo, std::size_t seed_index);

struct SummaryRow {
  std::vector<std::string> key;
  std::size_t count = 0;
  double success_rate = 0.0;
  double median_total = 0.0;
  double q1_total = 0.0;
  double q3_total = 0.0;
  double iqr_total = 0.0;
};

/// Midpoint median of an unsorted sample.
double median(std::vector<double> v);
/// Hinges: medians of the lower and upper halves (the middle value excluded for odd n).
std::pair<double, double> quartiles(std::vector<double> v);

/// Groups rows by the given columns. Per-task rows of multi-task runs are
/// skipped unless "task" is a group key.
std::vector<SummaryRow> aggregate(const std::vector<ResultRow>& rows, const std::vector<std::string>& group_keys);
std::string summary_csv(const std::vector<SummaryRow>& rows, const std::vector<std::string>& group_keys);

}  // namespace bilinear
