#include "bilinear/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "bilinear/baselines.hpp"
#include "bilinear/multitask.hpp"

namespace bilinear {

std::string to_string(Algo a) {
  switch (a) {
    case Algo::goblin: return "goblin";
    case Algo::rage: return "rage";
    case Algo::goblin_multi: return "goblin-multi";
    case Algo::doubexpdes: return "doubexpdes";
  }
  return "?";
}

Algo algo_from_string(const std::string& s) {
  if (s == "goblin") return Algo::goblin;
  if (s == "rage") return Algo::rage;
  if (s == "goblin-multi") return Algo::goblin_multi;
  if (s == "doubexpdes") return Algo::doubexpdes;
  throw InvalidArgument("unknown algorithm '" + s + "' (expected goblin, rage, goblin-multi, doubexpdes)");
}

bool is_multi(Algo a) { return a == Algo::goblin_multi || a == Algo::doubexpdes; }

std::uint64_t GridPoint::key() const {
  auto bits = [](double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof u);
    return u;
  };
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t v : {static_cast<std::uint64_t>(d1), static_cast<std::uint64_t>(d2),
                          static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(n_left),
                          static_cast<std::uint64_t>(n_right), static_cast<std::uint64_t>(tasks),
                          static_cast<std::uint64_t>(tasks ? k1 : 0), static_cast<std::uint64_t>(tasks ? k2 : 0),
                          bits(s_r), bits(noise_sigma)})
    h = mix64(h ^ v);
  return h;
}

void SweepConfig::validate() const {
  const auto& g = grid;
  require(!g.d1.empty() && !g.r.empty() && !g.n_left.empty() && !g.n_right.empty() && !g.tasks.empty() &&
              !g.s_r.empty() && !g.noise_sigma.empty() && !g.k1.empty() && !g.k2.empty(),
          "sweep: every grid axis needs at least one value");
  require(g.square || !g.d2.empty(), "sweep: d2 grid is empty");
  require(!algorithms.empty(), "sweep: no algorithms");
  require(seed_count >= 1, "sweep: seeds must be >= 1");
  require(base.delta > 0.0 && base.delta < 1.0, "sweep: delta must be in (0,1)");
  for (const auto& [a, c] : c_tau) require(c > 0.0, "sweep: c_tau must be positive for " + to_string(a));
  for (double s : g.s_r) require(s > 0.0, "sweep: S_r must be positive");
  for (double s : g.noise_sigma) require(s >= 0.0, "sweep: noise_sigma must be nonnegative");
}

std::vector<GridPoint> SweepConfig::points() const {
  std::vector<GridPoint> out;
  const std::vector<int>& d2s = grid.square ? std::vector<int>{0} : grid.d2;
  for (int d1 : grid.d1)
    for (int d2 : d2s)
      for (int r : grid.r)
        for (auto nl : grid.n_left)
          for (auto nr : (grid.paired_arms ? std::vector<std::size_t>{0} : grid.n_right))
            for (auto m : grid.tasks)
              for (int k1 : (m ? grid.k1 : std::vector<int>{grid.k1.front()}))
                for (int k2 : (m ? grid.k2 : std::vector<int>{grid.k2.front()}))
                  for (double sr : grid.s_r)
                    for (double ns : grid.noise_sigma) {
                      GridPoint p;
                      p.d1 = d1;
                      p.d2 = grid.square ? d1 : d2;
                      p.r = r;
                      p.n_left = nl;
                      p.n_right = grid.paired_arms ? nl : nr;
                      p.tasks = m;
                      p.k1 = k1;
                      p.k2 = k2;
                      p.s_r = sr;
                      p.noise_sigma = ns;
                      out.push_back(p);
                    }
  return out;
}

GoblinConfig SweepConfig::config_for(Algo a) const {
  GoblinConfig c = base;
  if (auto it = c_tau.find(a); it != c_tau.end()) c.c_tau = it->second;
  return c;
}

// ---- CSV ------------------------------------------------------------------

const std::vector<std::string>& ResultRow::columns() {
  static const std::vector<std::string> cols{
      "seed",           "algo",           "d1",           "d2",           "r",      "n_left_arms",
      "n_right_arms",   "M",              "delta",        "c_tau",        "samples_stage1",
      "samples_stage2", "samples_stage3", "total_samples", "phases",      "success", "min_gap",
      "wallclock_ms",   "task",           "oracle_draws", "error"};
  return cols;
}

namespace {

std::string fmt_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string ResultRow::field(const std::string& c) const {
  if (c == "seed") return std::to_string(seed);
  if (c == "algo") return algo;
  if (c == "d1") return std::to_string(d1);
  if (c == "d2") return std::to_string(d2);
  if (c == "r") return std::to_string(r);
  if (c == "n_left_arms") return std::to_string(n_left_arms);
  if (c == "n_right_arms") return std::to_string(n_right_arms);
  if (c == "M") return std::to_string(M);
  if (c == "delta") return fmt_double(delta);
  if (c == "c_tau") return fmt_double(c_tau);
  if (c == "samples_stage1") return std::to_string(samples_stage1);
  if (c == "samples_stage2") return std::to_string(samples_stage2);
  if (c == "samples_stage3") return std::to_string(samples_stage3);
  if (c == "total_samples") return std::to_string(total_samples);
  if (c == "phases") return std::to_string(phases);
  if (c == "success") return std::to_string(success);
  if (c == "min_gap") return fmt_double(min_gap);
  if (c == "wallclock_ms") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", wallclock_ms);
    return buf;
  }
  if (c == "task") return task;
  if (c == "oracle_draws") return std::to_string(oracle_draws);
  if (c == "error") return sanitize(error);
  throw InvalidArgument("unknown result column '" + c + "'");
}

std::string csv_header() {
  std::string s;
  for (const auto& c : ResultRow::columns()) s += (s.empty() ? "" : ",") + c;
  return s + "\n";
}

std::string to_csv_line(const ResultRow& row) {
  std::string s;
  bool first = true;
  for (const auto& c : ResultRow::columns()) {
    if (!first) s += ',';
    s += row.field(c);
    first = false;
  }
  return s + "\n";
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header");
  const auto header = split_csv(line);
  if (header != ResultRow::columns()) throw InvalidArgument("csv: unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw InvalidArgument("csv: wrong field count on line " + std::to_string(lineno));
    try {
      ResultRow r;
      r.seed = std::stoull(f[0]);
      r.algo = f[1];
      r.d1 = std::stoi(f[2]);
      r.d2 = std::stoi(f[3]);
      r.r = std::stoi(f[4]);
      r.n_left_arms = std::stoul(f[5]);
      r.n_right_arms = std::stoul(f[6]);
      r.M = std::stoul(f[7]);
      r.delta = std::stod(f[8]);
      r.c_tau = std::stod(f[9]);
      r.samples_stage1 = std::stol(f[10]);
      r.samples_stage2 = std::stol(f[11]);
      r.samples_stage3 = std::stol(f[12]);
      r.total_samples = std::stol(f[13]);
      r.phases = std::stoi(f[14]);
      r.success = std::stoi(f[15]);
      r.min_gap = std::stod(f[16]);
      r.wallclock_ms = std::stod(f[17]);
      r.task = f[18];
      r.oracle_draws = std::stol(f[19]);
      r.error = f[20];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InvalidArgument("csv: malformed number on line " + std::to_string(lineno));
    }
  }
  return rows;
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

// ---- Sweep ----------------------------------------------------------------

std::size_t worker_count(std::size_t cells) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BILIN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw InvalidArgument("BILIN_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, cells));
}

namespace {

ResultRow base_row(const SweepConfig& cfg, const GridPoint& pt, Algo algo, std::size_t seed_index) {
  ResultRow row;
  row.seed = seed_index;
  row.algo = to_string(algo);
  row.d1 = pt.d1;
  row.d2 = pt.d2;
  row.r = pt.r;
  row.n_left_arms = pt.n_left;
  row.n_right_arms = pt.n_right;
  row.M = pt.tasks;
  row.delta = cfg.base.delta;
  row.c_tau = cfg.config_for(algo).c_tau;
  return row;
}

void fill(ResultRow& row, const RunRecord& rec) {
  row.samples_stage1 = rec.samples_stage1;
  row.samples_stage2 = rec.samples_stage2;
  row.samples_stage3 = rec.samples_stage3;
  row.total_samples = rec.samples_stage1 + rec.samples_stage2 + rec.samples_stage3;
  row.phases = rec.phases;
  row.success = rec.success ? 1 : 0;
  row.oracle_draws = rec.oracle_draws;
}

}  // namespace

std::vector<ResultRow> run_cell(const SweepConfig& cfg, const GridPoint& pt, Algo algo, std::size_t seed_index) {
  const std::uint64_t inst_seed = derive_seed(cfg.master_seed, pt.key(), seed_index);
  const std::uint64_t run_seed = derive_seed(inst_seed, 0x72756eULL);
  const GoblinConfig gcfg = cfg.config_for(algo);
  ResultRow row = base_row(cfg, pt, algo, seed_index);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    if (!is_multi(algo)) {
      UnitBallSpec spec;
      spec.d1 = pt.d1;
      spec.d2 = pt.d2;
      spec.rank = pt.r;
      spec.n_left = pt.n_left;
      spec.n_right = pt.n_right;
      spec.s_r = pt.s_r;
      spec.noise_sigma = pt.noise_sigma;
      const BilinearInstance inst = gen_unit_ball_instance(spec, inst_seed);
      row.min_gap = min_gap(inst);
      Rng rng(run_seed);
      const RunRecord rec = algo == Algo::goblin ? run_single(inst, gcfg, rng) : run_rage_ambient(inst, gcfg, rng);
      fill(row, rec);
      row.wallclock_ms = elapsed();
      return {row};
    }
    MultiTaskOptions opts;
    opts.n_left = pt.n_left;
    opts.n_right = pt.n_right;
    opts.s_r = pt.s_r;
    opts.noise_sigma = pt.noise_sigma;
    opts.c0 = cfg.multitask_c0;
    Rng gen(inst_seed);
    const MultiTaskInstance inst = gen_multitask(pt.tasks, pt.d1, pt.d2, pt.k1, pt.k2, pt.r, gen, opts);
    MultiTaskConfig mcfg;
    mcfg.base = gcfg;
    Rng rng(run_seed);
    const MultiRunRecord rec =
        algo == Algo::goblin_multi ? run_multi(inst, mcfg, rng) : run_doubexpdes_like(inst, mcfg, rng);
    std::vector<ResultRow> rows;
    double gmin = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < rec.per_task.size(); ++m) {
      ResultRow tr = row;
      fill(tr, rec.per_task[m]);
      tr.min_gap = min_gap(inst.task(m));
      tr.task = std::to_string(m);
      gmin = std::min(gmin, tr.min_gap);
      rows.push_back(tr);
    }
    row.samples_stage1 = rec.samples_stage1_shared;
    row.samples_stage2 = rec.samples_stage2;
    row.samples_stage3 = rec.samples_stage3;
    row.total_samples = rec.total;
    row.phases = rec.phases;
    row.success = rec.all_success() ? 1 : 0;
    row.oracle_draws = rec.oracle_draws;
    row.min_gap = gmin;
    row.wallclock_ms = elapsed();
    for (auto& r : rows) r.wallclock_ms = row.wallclock_ms;
    rows.insert(rows.begin(), row);
    return rows;
  } catch (const std::exception& e) {
    row.success = 0;
    row.error = e.what();
    row.wallclock_ms = elapsed();
    return {row};
  }
}

std::vector<ResultRow> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  struct Cell {
    GridPoint pt;
    Algo algo;
    std::size_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& pt : cfg.points())
    for (std::size_t s = 0; s < cfg.seed_count; ++s)
      for (Algo a : cfg.algorithms)
        if (is_multi(a) == (pt.tasks > 0)) cells.push_back({pt, a, s});

  const std::size_t nthreads = worker_count(cells.size());
  std::FILE* out = nullptr;
  if (!cfg.output.empty()) {
    out = std::fopen(cfg.output.c_str(), "w");
    if (!out) throw Error("cannot open output '" + cfg.output + "'");
    const std::string h = csv_header();
    std::fwrite(h.data(), 1, h.size(), out);
    std::fflush(out);
  }

  std::vector<std::optional<std::vector<ResultRow>>> done(cells.size());
  std::size_t committed = 0;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      std::vector<ResultRow> rows = run_cell(cfg, cells[i].pt, cells[i].algo, cells[i].seed);
      std::lock_guard<std::mutex> lock(mu);
      done[i] = std::move(rows);
      // Commit the contiguous finished prefix; one write per cell.
      while (committed < cells.size() && done[committed]) {
        if (out) {
          std::string chunk;
          for (const auto& r : *done[committed]) chunk += to_csv_line(r);
          std::fwrite(chunk.data(), 1, chunk.size(), out);
          std::fflush(out);
        }
        ++committed;
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (out) std::fclose(out);

  std::vector<ResultRow> all;
  for (auto& d : done) all.insert(all.end(), d->begin(), d->end());
  return all;
}

// ---- Aggregation ----------------------------------------------------------

double median(std::vector<double> v) {
  require(!v.empty(), "median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> quartiles(std::vector<double> v) {
  require(!v.empty(), "quartiles: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 1) return {v[0], v[0]};
  const std::size_t half = n / 2;
  std::vector<double> lo(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<double> hi(v.end() - static_cast<std::ptrdiff_t>(half), v.end());
  return {median(lo), median(hi)};
}

std::vector<SummaryRow> aggregate(const std::vector<ResultRow>& rows, const std::vector<std::string>& group_keys) {
  require(!rows.empty(), "aggregate: no rows");
  for (const auto& k : group_keys) {
    const auto& cols = ResultRow::columns();
    require(std::find(cols.begin(), cols.end(), k) != cols.end(), "aggregate: unknown group key '" + k + "'");
  }
  // Per-task rows would double-count multi-task runs unless grouped by task.
  const bool by_task = std::find(group_keys.begin(), group_keys.end(), "task") != group_keys.end();
  std::map<std::vector<std::string>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    if (!by_task && r.task != "all") continue;
    std::vector<std::string> key;
    for (const auto& k : group_keys) key.push_back(r.field(k));
    groups[key].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    if (members.empty()) continue;
    SummaryRow s;
    s.key = key;
    s.count = members.size();
    std::vector<double> totals;
    double succ = 0.0;
    for (const auto* m : members) {
      totals.push_back(static_cast<double>(m->total_samples));
      succ += m->success;
    }
    s.success_rate = succ / static_cast<double>(s.count);
    s.median_total = median(totals);
    std::tie(s.q1_total, s.q3_total) = quartiles(totals);
    s.iqr_total = s.q3_total - s.q1_total;
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows, const std::vector<std::string>& group_keys) {
  std::string s;
  for (const auto& k : group_keys) s += k + ",";
  s += "count,success_rate,median_total,q1_total,q3_total,iqr_total\n";
  for (const auto& r : rows) {
    for (const auto& k : r.key) s += k + ",";
    s += std::to_string(r.count) + "," + fmt_double(r.success_rate) + "," + fmt_double(r.median_total) + "," +
         fmt_double(r.q1_total) + "," + fmt_double(r.q3_total) + "," + fmt_double(r.iqr_total) + "\n";
  }
  return s;
}

}  // namespace bilinear
