#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttllab/estimators.hpp"
#include "ttllab/metrics.hpp"
#include "ttllab/simulation.hpp"

namespace ttllab {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BenchConfig {
  SimConfig sim;
  std::vector<double> write_fractions{0.1};
  bool query_fraction_set = false;  // otherwise query_fraction = 1 - w per workload
  std::vector<EstimatorKind> estimators{EstimatorKind::Poisson, EstimatorKind::Fixed, EstimatorKind::NafDei,
                                        EstimatorKind::NafNaive};
  std::size_t runs = 3;
  std::uint64_t base_seed = 1;
  std::string out_dir = "results";
  std::string trace_query = "auto";
  bool replay_log = false;
  std::string preset = "desk";

  void validate() const {
    if (runs == 0) throw ConfigError("bench.runs: must be at least 1");
    if (write_fractions.empty()) throw ConfigError("workload.write_fraction: empty list");
    if (estimators.empty()) throw ConfigError("estimator.kind: empty list");
    for (double w : write_fractions) {
      SimConfig c = cell_config(w);
      try {
        c.workload.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    try {
      sim.latency.validate();
      sim.estimator.naf.validate();
      sim.estimator.reward.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (sim.cache_capacity == 0) throw ConfigError("cache.capacity: must be positive");
  }

  SimConfig cell_config(double write_fraction) const {
    SimConfig c = sim;
    c.workload.write_fraction = write_fraction;
    if (!query_fraction_set) c.workload.query_fraction = 1.0 - write_fraction;
    return c;
  }
};

inline void apply_preset(BenchConfig& cfg, const std::string& name) {
  if (name == "desk") {
    cfg.sim.workload.record_count = 2000;
    cfg.sim.workload.query_count = 200;
    cfg.sim.workload.duration = 300.0;
    cfg.sim.workload.target_throughput = 200.0;
    cfg.sim.cache_capacity = 160;
    cfg.runs = 3;
    cfg.write_fractions = {0.1};
  } else if (name == "paper") {
    cfg.sim.workload.record_count = 10000;
    cfg.sim.workload.query_count = 1000;
    cfg.sim.workload.duration = 1800.0;
    cfg.sim.workload.target_throughput = 1000.0;
    cfg.sim.cache_capacity = 800;
    cfg.runs = 5;
    cfg.write_fractions = {0.1, 0.3};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }
  cfg.preset = name;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("not a non-negative integer: '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

using Setter = std::function<void(BenchConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_key = [&t](const std::string& key, std::size_t WorkloadSpec::*field) {
      t[key] = [field](BenchConfig& c, const std::string& v) { c.sim.workload.*field = to_u64(v); };
    };
    auto real_key = [&t](const std::string& key, double WorkloadSpec::*field) {
      t[key] = [field](BenchConfig& c, const std::string& v) { c.sim.workload.*field = to_double(v); };
    };
    size_key("workload.record_count", &WorkloadSpec::record_count);
    size_key("workload.query_count", &WorkloadSpec::query_count);
    size_key("workload.result_cap", &WorkloadSpec::result_cap);
    size_key("workload.client_count", &WorkloadSpec::client_count);
    size_key("workload.connections_per_client", &WorkloadSpec::connections_per_client);
    real_key("workload.zipf_s", &WorkloadSpec::zipf_s);
    real_key("workload.scan_mean", &WorkloadSpec::scan_mean);
    real_key("workload.scan_std", &WorkloadSpec::scan_std);
    real_key("workload.target_throughput", &WorkloadSpec::target_throughput);
    real_key("workload.duration", &WorkloadSpec::duration);
    t["workload.write_fraction"] = [](BenchConfig& c, const std::string& v) {
      c.write_fractions.clear();
      for (const auto& item : split_list(v)) c.write_fractions.push_back(to_double(item));
    };
    t["workload.query_fraction"] = [](BenchConfig& c, const std::string& v) {
      c.sim.workload.query_fraction = to_double(v);
      c.query_fraction_set = true;
    };
    t["workload.seed"] = [](BenchConfig& c, const std::string& v) { c.base_seed = to_u64(v); };

    t["latency.edge_rtt_ms"] = [](BenchConfig& c, const std::string& v) { c.sim.latency.edge_rtt = to_double(v) / 1000.0; };
    t["latency.origin_rtt_ms"] = [](BenchConfig& c, const std::string& v) {
      c.sim.latency.origin_rtt = to_double(v) / 1000.0;
    };
    t["latency.invalidation_delay_ms"] = [](BenchConfig& c, const std::string& v) {
      c.sim.latency.invalidation_delay = to_double(v) / 1000.0;
    };
    t["cache.capacity"] = [](BenchConfig& c, const std::string& v) { c.sim.cache_capacity = to_u64(v); };
    t["telemetry.window"] = [](BenchConfig& c, const std::string& v) { c.sim.telemetry_window = to_double(v); };

    t["estimator.kind"] = [](BenchConfig& c, const std::string& v) {
      c.estimators.clear();
      for (const auto& item : split_list(v)) c.estimators.push_back(parse_estimator_kind(item));
    };
    t["estimator.fixed_ttl"] = [](BenchConfig& c, const std::string& v) { c.sim.estimator.fixed_ttl = to_double(v); };
    t["estimator.poisson_max_ttl"] = [](BenchConfig& c, const std::string& v) {
      c.sim.estimator.poisson_max_ttl = to_double(v);
    };

    auto naf_size = [&t](const std::string& key, std::size_t NafConfig::*field) {
      t[key] = [field](BenchConfig& c, const std::string& v) { c.sim.estimator.naf.*field = to_u64(v); };
    };
    auto naf_real = [&t](const std::string& key, double NafConfig::*field) {
      t[key] = [field](BenchConfig& c, const std::string& v) { c.sim.estimator.naf.*field = to_double(v); };
    };
    naf_size("naf.write_inputs", &NafConfig::write_inputs);
    naf_size("naf.action_dim", &NafConfig::action_dim);
    naf_size("naf.batch_size", &NafConfig::batch_size);
    naf_size("naf.replay_capacity", &NafConfig::replay_capacity);
    naf_size("naf.target_sync_interval", &NafConfig::target_sync_interval);
    naf_size("naf.initial_random_decisions", &NafConfig::initial_random_decisions);
    naf_size("naf.noise_decay_steps", &NafConfig::noise_decay_steps);
    naf_real("naf.gamma", &NafConfig::gamma);
    naf_real("naf.lr", &NafConfig::lr);
    naf_real("naf.clip", &NafConfig::clip);
    naf_real("naf.target_tau", &NafConfig::target_tau);
    naf_real("naf.ttl_min", &NafConfig::ttl_min);
    naf_real("naf.ttl_max", &NafConfig::ttl_max);
    naf_real("naf.reward_scale", &NafConfig::reward_scale);
    naf_real("naf.noise_sigma_start", &NafConfig::noise_sigma_start);
    naf_real("naf.noise_sigma_end", &NafConfig::noise_sigma_end);
    t["naf.hidden"] = [](BenchConfig& c, const std::string& v) {
      c.sim.estimator.naf.hidden.clear();
      for (const auto& item : split_list(v)) c.sim.estimator.naf.hidden.push_back(to_u64(item));
    };
    t["naf.normalize_actions"] = [](BenchConfig& c, const std::string& v) {
      c.sim.estimator.naf.normalize_actions = to_bool(v);
    };
    t["naf.naive_pairing"] = [](BenchConfig& c, const std::string& v) {
      if (v == "current")
        c.sim.estimator.naive_pairing = NaivePairing::Current;
      else if (v == "previous")
        c.sim.estimator.naive_pairing = NaivePairing::Previous;
      else
        throw std::invalid_argument("expected current or previous");
    };
    t["naf.clip_mode"] = [](BenchConfig& c, const std::string& v) {
      if (v == "element")
        c.sim.estimator.naf.clip_mode = ClipMode::Element;
      else if (v == "global_norm")
        c.sim.estimator.naf.clip_mode = ClipMode::GlobalNorm;
      else
        throw std::invalid_argument("expected element or global_norm");
    };

    t["reward.r0"] = [](BenchConfig& c, const std::string& v) { c.sim.estimator.reward.r0 = to_double(v); };
    t["reward.load_threshold"] = [](BenchConfig& c, const std::string& v) {
      c.sim.estimator.reward.load_threshold = to_double(v);
    };
    t["reward.adjust_threshold_to_workload"] = [](BenchConfig& c, const std::string& v) {
      c.sim.estimator.reward.adjust_threshold_to_workload = to_bool(v);
    };
    t["reward.above_threshold"] = [](BenchConfig& c, const std::string& v) {
      if (v == "penalty")
        c.sim.estimator.reward.above_threshold = LoadRewardForm::Penalty;
      else if (v == "literal")
        c.sim.estimator.reward.above_threshold = LoadRewardForm::Literal;
      else
        throw std::invalid_argument("expected penalty or literal");
    };

    t["bench.runs"] = [](BenchConfig& c, const std::string& v) { c.runs = to_u64(v); };
    t["bench.base_seed"] = [](BenchConfig& c, const std::string& v) { c.base_seed = to_u64(v); };
    t["bench.out_dir"] = [](BenchConfig& c, const std::string& v) { c.out_dir = v; };
    t["bench.trace_query"] = [](BenchConfig& c, const std::string& v) { c.trace_query = v; };
    t["bench.replay_log"] = [](BenchConfig& c, const std::string& v) { c.replay_log = to_bool(v); };
    t["bench.trace_max_rows"] = [](BenchConfig& c, const std::string& v) { c.sim.trace_max_rows = to_u64(v); };
    return t;
  }();
  return table;
}

}  // namespace detail

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Reads `key = value` lines; `#` starts a comment. Keys are checked when
/// applied, not here.
inline std::vector<ConfigEntry> read_config(std::istream& in, const std::string& source = "config") {
  std::vector<ConfigEntry> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = detail::trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    ConfigEntry e{detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": missing key");
    out.push_back(std::move(e));
  }
  return out;
}

/// Applies entries in order on top of `cfg`. `bench.preset` is handled by
/// the caller before anything else.
inline void apply_entries(BenchConfig& cfg, const std::vector<ConfigEntry>& entries, const std::string& source = "config") {
  const auto& table = detail::setters();
  for (const ConfigEntry& e : entries) {
    if (e.key == "bench.preset") continue;
    const std::string where = source + ":" + std::to_string(e.line) + ": ";
    const auto it = table.find(e.key);
    if (it == table.end()) throw ConfigError(where + "unknown key '" + e.key + "'");
    try {
      it->second(cfg, e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(where + "bad value for '" + e.key + "': " + ex.what());
    }
  }
}

/// Preset first (explicit argument, then `bench.preset`, then desk), then
/// the file's keys.
inline BenchConfig load_config(std::istream& in, const std::string& source = "config",
                               std::optional<std::string> preset = std::nullopt) {
  const std::vector<ConfigEntry> entries = read_config(in, source);
  if (!preset) {
    for (const ConfigEntry& e : entries)
      if (e.key == "bench.preset") preset = e.value;
  }
  BenchConfig cfg;
  apply_preset(cfg, preset.value_or("desk"));
  apply_entries(cfg, entries, source);
  return cfg;
}

inline BenchConfig load_config_file(const std::string& path, std::optional<std::string> preset = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return load_config(in, path, std::move(preset));
}

inline std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys{"bench.preset"};
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

// ---------------------------------------------------------------------------
// Experiment execution

struct RunSummary {
  double write_fraction = 0.0;
  EstimatorKind kind = EstimatorKind::Poisson;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::optional<double> rmse;
  double hit_rate = 0.0;
  double invalidation_rate = 0.0;
  CacheStats cache;
  std::uint64_t ops = 0;
  double throughput = 0.0;
  std::size_t resolved = 0;
  std::size_t censored = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t dropped_transitions = 0;
  std::optional<BestDefault> best_default;
};

inline RunSummary summarize_run(const RunResult& r, double w, EstimatorKind kind, std::size_t run) {
  RunSummary s;
  s.write_fraction = w;
  s.kind = kind;
  s.run = run;
  s.seed = r.seed;
  s.rmse = r.rmse();
  s.hit_rate = r.hit_rate();
  s.invalidation_rate = r.invalidation_rate();
  s.cache = r.cache;
  s.ops = r.ops;
  s.throughput = r.throughput();
  const std::vector<double> truth = r.true_ttls();
  s.resolved = truth.size();
  s.censored = r.serves.size() - truth.size();
  s.train_steps = r.train_steps;
  s.dropped_transitions = r.dropped_transitions;
  if (!truth.empty()) s.best_default = best_default_oracle(truth, default_ttl_grid());
  return s;
}

struct PaperReference {
  double hit_rate = 0.0;
  double invalidation_rate = 0.0;
};

inline std::optional<PaperReference> paper_reference(EstimatorKind kind, double w) {
  const bool w10 = std::abs(w - 0.1) < 1e-9;
  const bool w30 = std::abs(w - 0.3) < 1e-9;
  if (kind == EstimatorKind::NafDei) {
    if (w10) return PaperReference{0.885, 0.073};
    if (w30) return PaperReference{0.777, 0.214};
  } else if (kind == EstimatorKind::Poisson) {
    if (w10) return PaperReference{0.795, 0.068};
    if (w30) return PaperReference{0.626, 0.156};
  }
  return std::nullopt;
}

struct CellSummary {
  double write_fraction = 0.0;
  EstimatorKind kind = EstimatorKind::Poisson;
  std::vector<RunSummary> runs;
};

struct ExperimentResult {
  std::vector<CellSummary> cells;
  std::vector<std::string> files;
};

inline std::string workload_label(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%g", w * 100.0);
  return buf;
}

namespace detail {

inline std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

inline double most_common_ttl(const std::vector<RunSummary>& runs) {
  std::map<double, int> votes;
  for (const RunSummary& r : runs)
    if (r.best_default) ++votes[r.best_default->ttl];
  double best = 0.0;
  int count = 0;
  for (const auto& [ttl, n] : votes)
    if (n > count) best = ttl, count = n;
  return best;
}

inline std::optional<MeanStd> stats_of(const std::vector<RunSummary>& runs,
                                       const std::function<std::optional<double>(const RunSummary&)>& get) {
  std::vector<double> xs;
  for (const RunSummary& r : runs)
    if (auto v = get(r)) xs.push_back(*v);
  if (xs.empty()) return std::nullopt;
  return mean_std(xs);
}

/// Miss-heaviest range query (fewest id on ties), or nullopt with no serves.
inline std::optional<QueryId> most_missed_query(const RunResult& r, std::size_t query_count) {
  std::map<QueryId, std::size_t> misses;
  for (const ServeRecord& s : r.serves)
    if (s.query_id < query_count) ++misses[s.query_id];
  std::optional<QueryId> best;
  std::size_t count = 0;
  for (const auto& [id, n] : misses)
    if (n > count) best = id, count = n;
  return best;
}

}  // namespace detail

/// Runs every (workload, estimator) cell for cfg.runs seeds and writes the
/// CSV artifacts into cfg.out_dir. `log` receives progress lines.
inline ExperimentResult run_experiment(const BenchConfig& cfg, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + cfg.out_dir + "': " + ec.message());

  ExperimentResult result;
  auto summary = detail::open_csv(dir / "summary.csv");
  auto per_run = detail::open_csv(dir / "per_run.csv");
  auto trace = detail::open_csv(dir / "trace.csv");
  auto cdf = detail::open_csv(dir / "cdf.csv");
  auto querytrace = detail::open_csv(dir / "querytrace.csv");
  std::ofstream replay;
  if (cfg.replay_log) replay = detail::open_csv(dir / "replay_log.csv");

  summary << "workload,write_fraction,estimator,runs,truncated_rmse_mean,truncated_rmse_std,hit_rate_mean,"
             "hit_rate_std,invalidation_rate_mean,invalidation_rate_std,stale_reads_mean,stale_reads_std,"
             "throughput_mean,best_default_ttl,best_default_rmse_mean,paper_hit_rate,paper_invalidation_rate\n";
  per_run << "workload,write_fraction,estimator,run,seed,truncated_rmse,hit_rate,invalidation_rate,stale_reads,hits,"
             "misses,inserts,invalidations,evictions,expirations,ops,throughput,resolved_serves,censored_serves,"
             "train_steps,dropped_transitions,best_default_ttl,best_default_rmse\n";
  trace << "workload,estimator,op_index,time,kind,id,outcome,latency_ms\n";
  cdf << "workload,series,value,fraction\n";
  querytrace << "workload,estimator,query_id,observation_index,virtual_time,learned_action,resolved_true_ttl\n";
  if (cfg.replay_log) replay << "workload,estimator,serve_id,query_id,decided_at,due_at,action,reward,injected_at\n";

  for (double w : cfg.write_fractions) {
    const std::string label = workload_label(w);
    SimConfig base = cfg.cell_config(w);
    std::optional<RunResult> learned_rep0, poisson_rep0;
    EstimatorKind learned_kind = EstimatorKind::NafDei;
    const bool has_dei =
        std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorKind::NafDei) != cfg.estimators.end();
    if (!has_dei) learned_kind = EstimatorKind::NafNaive;

    for (EstimatorKind kind : cfg.estimators) {
      CellSummary cell{w, kind, {}};
      for (std::size_t i = 0; i < cfg.runs; ++i) {
        SimConfig sc = base;
        sc.estimator.kind = kind;
        const std::uint64_t seed = cfg.base_seed + i;
        sc.workload.seed = seed;
        sc.record_trace = i == 0;
        const bool is_naf = kind == EstimatorKind::NafDei || kind == EstimatorKind::NafNaive;
        sc.record_replay = cfg.replay_log && i == 0 && is_naf;
        RunResult r = run_simulation(sc, seed);
        RunSummary rs = summarize_run(r, w, kind, i);
        if (log)
          *log << label << " " << to_string(kind) << " run " << i << " seed " << seed << ": hit "
               << detail::fmt(rs.hit_rate, "%.3f") << " inv " << detail::fmt(rs.invalidation_rate, "%.3f") << " rmse "
               << (rs.rmse ? detail::fmt(*rs.rmse, "%.2f") : std::string("n/a")) << "\n";

        per_run << label << "," << detail::fmt(w, "%g") << "," << to_string(kind) << "," << i << "," << seed << ","
                << detail::fmt(rs.rmse) << "," << detail::fmt(rs.hit_rate) << "," << detail::fmt(rs.invalidation_rate)
                << "," << rs.cache.stale_reads << "," << rs.cache.hits << "," << rs.cache.misses << ","
                << rs.cache.inserts << "," << rs.cache.invalidations << "," << rs.cache.evictions << ","
                << rs.cache.expirations << "," << rs.ops << "," << detail::fmt(rs.throughput) << "," << rs.resolved
                << "," << rs.censored << "," << rs.train_steps << "," << rs.dropped_transitions << ","
                << (rs.best_default ? detail::fmt(rs.best_default->ttl, "%g") : std::string()) << ","
                << (rs.best_default ? detail::fmt(rs.best_default->rmse) : std::string()) << "\n";

        if (i == 0) {
          for (const TraceRow& t : r.trace)
            trace << label << "," << to_string(kind) << "," << t.op_index << "," << detail::fmt(t.time) << ","
                  << to_string(t.kind) << "," << t.id << "," << t.outcome << ","
                  << detail::fmt(t.latency * 1000.0, "%.3f") << "\n";
          for (const ReplayLogRow& row : r.replay_log)
            replay << label << "," << to_string(kind) << "," << row.serve_id << "," << row.query_id << ","
                   << detail::fmt(row.decided_at) << "," << detail::fmt(row.due_at) << "," << detail::fmt(row.action)
                   << "," << detail::fmt(row.reward) << "," << detail::fmt(row.injected_at) << "\n";
          r.trace.clear();
          r.replay_log.clear();
          if (kind == learned_kind) learned_rep0 = std::move(r);
          if (kind == EstimatorKind::Poisson) poisson_rep0 = std::move(r);
        }
        cell.runs.push_back(std::move(rs));
      }

      const auto& runs = cell.runs;
      const auto rmse = detail::stats_of(runs, [](const RunSummary& r) { return r.rmse; });
      const auto hit = detail::stats_of(runs, [](const RunSummary& r) { return std::optional(r.hit_rate); });
      const auto inv = detail::stats_of(runs, [](const RunSummary& r) { return std::optional(r.invalidation_rate); });
      const auto stale = detail::stats_of(
          runs, [](const RunSummary& r) { return std::optional(static_cast<double>(r.cache.stale_reads)); });
      const auto tput = detail::stats_of(runs, [](const RunSummary& r) { return std::optional(r.throughput); });
      const auto best = detail::stats_of(runs, [](const RunSummary& r) {
        return r.best_default ? std::optional(r.best_default->rmse) : std::nullopt;
      });
      const auto ref = paper_reference(kind, w);
      summary << label << "," << detail::fmt(w, "%g") << "," << to_string(kind) << "," << runs.size() << ","
              << (rmse ? detail::fmt(rmse->mean) : "") << "," << (rmse ? detail::fmt(rmse->stddev) : "") << ","
              << detail::fmt(hit->mean) << "," << detail::fmt(hit->stddev) << "," << detail::fmt(inv->mean) << ","
              << detail::fmt(inv->stddev) << "," << detail::fmt(stale->mean) << "," << detail::fmt(stale->stddev)
              << "," << detail::fmt(tput->mean) << ","
              << (best ? detail::fmt(detail::most_common_ttl(runs), "%g") : "") << ","
              << (best ? detail::fmt(best->mean) : "") << "," << (ref ? detail::fmt(ref->hit_rate, "%.3f") : "")
              << "," << (ref ? detail::fmt(ref->invalidation_rate, "%.3f") : "") << "\n";
      result.cells.push_back(std::move(cell));
    }

    auto emit_series = [&](const char* series, std::vector<double> values) {
      if (values.empty()) return;
      for (const CdfPoint& p : empirical_cdf(std::move(values)))
        cdf << label << "," << series << "," << detail::fmt(p.value) << "," << detail::fmt(p.fraction) << "\n";
    };
    if (learned_rep0) {
      std::vector<double> actions;
      for (const ServeRecord& s : learned_rep0->serves) actions.push_back(s.action_ttl);
      emit_series("learned", std::move(actions));
    }
    const RunResult* truth_src = learned_rep0 ? &*learned_rep0 : poisson_rep0 ? &*poisson_rep0 : nullptr;
    if (truth_src) emit_series("optimal", truth_src->true_ttls());
    if (poisson_rep0) {
      std::vector<double> actions;
      for (const ServeRecord& s : poisson_rep0->serves) actions.push_back(s.action_ttl);
      emit_series("poisson", std::move(actions));
    }

    if (learned_rep0) {
      std::optional<QueryId> q;
      if (cfg.trace_query == "auto") {
        q = detail::most_missed_query(*learned_rep0, base.workload.query_count);
      } else {
        try {
          q = detail::to_u64(cfg.trace_query);
        } catch (const std::invalid_argument&) {
          throw ConfigError("bench.trace_query: expected auto or a query id, got '" + cfg.trace_query + "'");
        }
        const bool seen = std::any_of(learned_rep0->serves.begin(), learned_rep0->serves.end(),
                                      [&](const ServeRecord& s) { return s.query_id == *q; });
        if (!seen) throw ConfigError("trace query " + cfg.trace_query + " was never observed");
      }
      if (q) {
        std::size_t obs = 0;
        for (const ServeRecord& s : learned_rep0->serves) {
          if (s.query_id != *q) continue;
          querytrace << label << "," << to_string(learned_kind) << "," << *q << "," << obs++ << ","
                     << detail::fmt(s.served_at) << "," << detail::fmt(s.action_ttl) << ","
                     << detail::fmt(s.resolved_true_ttl) << "\n";
        }
      }
    }
  }

  for (const char* f : {"summary.csv", "per_run.csv", "trace.csv", "cdf.csv", "querytrace.csv"})
    result.files.push_back((dir / f).string());
  if (cfg.replay_log) result.files.push_back((dir / "replay_log.csv").string());
  for (std::ofstream* f : {&summary, &per_run, &trace, &cdf, &querytrace}) {
    f->flush();
    if (!*f) throw std::runtime_error("write failed in '" + cfg.out_dir + "'");
  }
  return result;
}

/// Fixed-width table of cell means for the terminal.
inline void print_report(const ExperimentResult& res, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-10s %4s %12s %10s %10s %10s\n", "workload", "estimator", "runs", "rmse[s]",
                "hit", "inval", "stale");
  out << line;
  for (const CellSummary& c : res.cells) {
    const auto rmse = detail::stats_of(c.runs, [](const RunSummary& r) { return r.rmse; });
    const auto hit = detail::stats_of(c.runs, [](const RunSummary& r) { return std::optional(r.hit_rate); });
    const auto inv = detail::stats_of(c.runs, [](const RunSummary& r) { return std::optional(r.invalidation_rate); });
    const auto stale = detail::stats_of(
        c.runs, [](const RunSummary& r) { return std::optional(static_cast<double>(r.cache.stale_reads)); });
    std::snprintf(line, sizeof line, "%-8s %-10s %4zu %12.3f %10.4f %10.4f %10.1f\n",
                  workload_label(c.write_fraction).c_str(), to_string(c.kind), c.runs.size(),
                  rmse ? rmse->mean : std::nan(""), hit->mean, inv->mean, stale->mean);
    out << line;
  }
}

}  // namespace ttllab
