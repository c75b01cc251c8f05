#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "ttllab/bench.hpp"
#include "ttllab/cachesys.hpp"
#include "ttllab/estimators.hpp"
#include "ttllab/naf.hpp"
#include "ttllab/neural.hpp"
#include "ttllab/rng.hpp"
#include "ttllab/simulation.hpp"
#include "ttllab/telemetry.hpp"
#include "ttllab/workload.hpp"

namespace ttllab::checks {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

/// Asymptotic Kolmogorov survival function with Stephens' small-sample
/// correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline std::vector<double> random_state(Rng& rng, std::size_t n) {
  std::vector<double> s(n + 1);
  for (std::size_t i = 0; i < n; ++i) s[i] = rng.uniform();
  s[n] = rng.uniform(-1.0, 1.0);
  return s;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ttllab-" + tag + "-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline double mean_of(const std::vector<double>& xs) { return mean_std(xs).mean; }

}  // namespace detail

inline CheckResult poisson_exact() {
  CheckResult r{1, "Poisson TTL exact", true, ""};
  WriteRateTracker writes(100.0);
  writes.record_write(0, 1.0);
  writes.record_write(0, 2.0);
  for (int i = 0; i < 3; ++i) writes.record_write(1, 3.0 + i);
  const std::vector<std::size_t> known{0, 1};
  const std::vector<std::size_t> unknown{5, 6, 7};
  const double a = poisson_ttl(known, writes, 300.0, 10.0);
  const double b = poisson_ttl(unknown, writes, 300.0, 10.0);
  r.passed = a == 20.0 && b == 100.0;
  r.detail = "rates {0.02, 0.03} -> " + detail::num(a, 17) + " s; 3 unknown @300 -> " + detail::num(b, 17) + " s";
  return r;
}

inline CheckResult naf_identities(std::size_t states = 1000) {
  CheckResult r{2, "NAF argmax and Q(s,mu)=V", true, ""};
  NafConfig cfg;
  Rng rng(mix_seed(2, 7));
  double worst_gap = 0.0, worst_beat = -INFINITY;
  for (std::size_t i = 0; i < states; ++i) {
    if (i % 100 == 0) cfg.normalize_actions = (i / 100) % 2 == 0;
    NafAgent agent(cfg, 1000 + i / 100);
    const std::vector<double> s = detail::random_state(rng, cfg.write_inputs);
    const NafOutputs out = agent.evaluate(s);
    const double mu = out.mu[0];
    const double scale = cfg.action_scale();
    worst_gap = std::max(worst_gap, std::abs(out.q(std::vector<double>{mu}) - out.value));
    const double q_mu = out.q(std::vector<double>{mu});
    for (int k = -10000; k <= 10000; ++k) {
      const double a = mu + k * 0.01 / scale;  // mu +- 100 s at 0.01 s resolution
      worst_beat = std::max(worst_beat, out.q(std::vector<double>{a}) - q_mu);
    }
  }
  r.passed = worst_gap < 1e-10 && worst_beat <= 0.0;
  r.detail = "max |Q(s,mu)-V| = " + detail::num(worst_gap) + ", max grid Q - Q(mu) = " + detail::num(worst_beat);
  return r;
}

inline CheckResult gradient_check(std::size_t instances = 100) {
  CheckResult r{3, "NAF loss gradient vs central differences", true, ""};
  const auto t0 = std::chrono::steady_clock::now();
  NafConfig cfg;
  Rng rng(mix_seed(3, 7));
  double worst = 0.0;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    MlpParams params = init_mlp(cfg.layer_dims(), rng);
    const MlpParams target = init_mlp(cfg.layer_dims(), rng);
    for (double& p : params.data) p += rng.normal(0.0, 0.05);
    std::vector<Transition> ts(cfg.batch_size);
    for (Transition& t : ts) {
      t.s = detail::random_state(rng, cfg.write_inputs);
      t.s_next = detail::random_state(rng, cfg.write_inputs);
      t.a = {rng.uniform(cfg.ttl_min, cfg.ttl_max)};
      t.r = rng.normal(0.0, 1.0);
    }
    std::vector<const Transition*> batch;
    for (const Transition& t : ts) batch.push_back(&t);
    auto loss = [&](const MlpParams& p, MlpParams* g) {
      return naf_batch_loss(p, target, cfg.gamma, batch, 1, g, cfg.action_offset(), cfg.action_scale());
    };
    MlpParams grads = params.zeros_like();
    loss(params, &grads);
    const double h = 1e-6;
    MlpParams p = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
      p.data[i] = params.data[i] + h;
      const double up = loss(p, nullptr);
      p.data[i] = params.data[i] - h;
      const double down = loss(p, nullptr);
      p.data[i] = params.data[i];
      const double fd = (up - down) / (2.0 * h);
      const double g = grads.data[i];
      // magnitudes below 1e-5 are compared on an absolute scale; there the
      // difference quotient is dominated by rounding in the loss
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-5});
      worst = std::max(worst, rel);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.passed = worst < 1e-4 && secs < 10.0;
  r.detail = "max relative error " + detail::num(worst) + " over " + std::to_string(instances) + " instances in " +
             detail::num(secs, 3) + " s";
  return r;
}

/// Forward-scan reference: a serve resolves at the first later write after
/// which re-evaluating its query gives a different result.
inline CheckResult oracle_equivalence(std::size_t traces = 50, std::size_t ops = 1000) {
  CheckResult r{4, "true-TTL oracle vs forward scan", true, ""};
  std::size_t compared = 0, resolved = 0, shadows = 0, mismatches = 0;
  for (std::size_t trace = 0; trace < traces; ++trace) {
    WorkloadSpec spec;  // desk scale
    Rng world_rng(mix_seed(400 + trace, 0)), op_rng(mix_seed(400 + trace, 1)), ttl_rng(mix_seed(400 + trace, 2));
    const World world = generate_world(spec, world_rng);
    RecordStore store(world.records);
    OpGenerator gen(spec);
    TrueTtlOracle oracle;

    using Snapshot = std::vector<std::pair<std::size_t, double>>;
    struct Serve {
      QueryId id;
      double lo, hi, at, ttl;
      Snapshot result;
    };
    struct Write {
      double at;
      std::size_t key;
      double value;
    };
    std::vector<Serve> serves;
    std::vector<std::pair<std::size_t, Write>> writes;  // (serves issued before, write)
    auto snapshot = [&](const RecordStore& st, QueryId id, double lo, double hi) {
      Snapshot out;
      if (id >= world.queries.size()) {
        const std::size_t key = id - world.queries.size();
        out.push_back({key, st.value(key)});
      } else {
        for (std::size_t k : st.evaluate(lo, hi)) out.push_back({k, st.value(k)});
      }
      return out;
    };

    double now = 0.0;
    for (std::size_t i = 0; i < ops; ++i) {
      now += ttl_rng.exponential(1.0 / spec.target_throughput);
      const Op op = gen.next(op_rng);
      if (op.kind == OpKind::Update) {
        const double old_value = store.update(op.key, op.new_value);
        oracle.on_write(old_value, op.new_value, now);
        writes.push_back({serves.size(), {now, op.key, op.new_value}});
        continue;
      }
      const QueryId id = op.kind == OpKind::Query ? op.query_id : world.queries.size() + op.key;
      double lo, hi;
      if (op.kind == OpKind::Query) {
        lo = world.queries[op.query_id].lo;
        hi = world.queries[op.query_id].hi;
      } else {
        lo = store.value(op.key);
        hi = std::nextafter(lo, INFINITY);
      }
      const double ttl = ttl_rng.uniform(0.05, 3.0);
      oracle.on_serve(id, lo, hi, now, ttl);
      serves.push_back({id, lo, hi, now, ttl, snapshot(store, id, lo, hi)});
    }

    // Replay the writes on a fresh store and scan forward per serve.
    for (std::size_t s = 0; s < serves.size(); ++s) {
      RecordStore replay(world.records);
      std::optional<double> truth;
      for (const auto& [before, w] : writes) {
        replay.update(w.key, w.value);
        if (before <= s) continue;
        if (snapshot(replay, serves[s].id, serves[s].lo, serves[s].hi) != serves[s].result) {
          truth = w.at - serves[s].at;
          break;
        }
      }
      const ServeRecord& rec = oracle.record(s);
      const bool shadow = truth && *truth >= serves[s].ttl;
      ++compared;
      if (truth) ++resolved;
      if (shadow) ++shadows;
      if (rec.resolved_true_ttl != truth || (truth && rec.shadow != shadow)) ++mismatches;
    }
  }
  r.passed = mismatches == 0 && shadows > 0;
  r.detail = std::to_string(compared) + " serves, " + std::to_string(resolved) + " resolved, " +
             std::to_string(shadows) + " theoretical, " + std::to_string(mismatches) + " mismatches";
  return r;
}

inline CheckResult invalidation_equivalence(std::size_t updates = 10000) {
  CheckResult r{5, "origin_update vs brute-force re-evaluation", true, ""};
  Rng rng(mix_seed(5, 7));
  CacheSystem cache(150);
  const double domain = 2000.0;
  double now = 0.0;
  ServeId serve = 0;
  std::size_t mismatches = 0, hits = 0;
  for (std::size_t u = 0; u < updates; ++u) {
    for (int k = 0; k < 3; ++k) {
      now += rng.exponential(0.01);
      const double lo = rng.uniform(0.0, domain);
      const double hi = lo + (rng.below(10) == 0 ? rng.uniform(0.0, 1e-9) : rng.exponential(15.0));
      cache.insert(rng.below(300), serve++, lo, hi, rng.uniform(0.05, 5.0), now);
    }
    now += rng.exponential(0.01);
    const double old_value = rng.uniform(0.0, domain);
    const double new_value = rng.uniform(0.0, domain);

    std::vector<QueryId> expected;
    for (const OriginIndexEntry& e : cache.index_entries()) {
      if (e.expires_at <= now) continue;
      const bool old_in = old_value >= e.lo && old_value < e.hi;
      const bool new_in = new_value >= e.lo && new_value < e.hi;
      if (old_in || new_in) expected.push_back(e.query_id);
    }
    std::vector<QueryId> got;
    for (const Invalidation& inv : cache.origin_update(old_value, new_value, now)) got.push_back(inv.query_id);
    std::sort(got.begin(), got.end());
    std::sort(expected.begin(), expected.end());
    if (got != expected) ++mismatches;
    hits += got.size();
    if (!cache.consistent()) ++mismatches;
  }
  r.passed = mismatches == 0 && hits > 0;
  r.detail = std::to_string(updates) + " updates, " + std::to_string(hits) + " invalidations, " +
             std::to_string(mismatches) + " mismatches";
  return r;
}

inline CheckResult dei_timing() {
  CheckResult r{6, "DEI timing contract", true, ""};
  SimConfig cfg;
  cfg.estimator.kind = EstimatorKind::NafDei;
  cfg.estimator.naf.initial_random_decisions = 500;
  cfg.record_replay = true;
  cfg.record_timing = true;
  const RunResult res = run_simulation(cfg, 11);
  std::size_t early = 0, off_due = 0;
  for (const ReplayLogRow& row : res.replay_log)
    if (row.injected_at != row.due_at) ++off_due;
  for (const TrainSample& s : res.train_samples)
    if (s.latest_available > s.time || s.latest_injection > s.time) ++early;
  r.passed = early == 0 && off_due == 0 && !res.replay_log.empty() && !res.train_samples.empty();
  r.detail = std::to_string(res.replay_log.size()) + " injections (" + std::to_string(off_due) + " off due time), " +
             std::to_string(res.train_samples.size()) + " train steps (" + std::to_string(early) + " premature)";
  return r;
}

inline CheckResult determinism() {
  CheckResult r{7, "byte-identical summary.csv", true, ""};
  BenchConfig cfg;
  apply_preset(cfg, "desk");
  cfg.sim.workload.duration = 60.0;
  cfg.runs = 2;
  detail::TempDir a("det-a"), b("det-b");
  std::vector<std::string> differing;
  cfg.out_dir = a.path.string();
  run_experiment(cfg);
  cfg.out_dir = b.path.string();
  run_experiment(cfg);
  for (const char* f : {"summary.csv", "per_run.csv", "trace.csv", "cdf.csv", "querytrace.csv"})
    if (detail::slurp(a.path / f) != detail::slurp(b.path / f)) differing.push_back(f);
  const std::string summary = detail::slurp(a.path / "summary.csv");
  r.passed = differing.empty() && !summary.empty();
  r.detail = differing.empty() ? "all CSV outputs identical (" + std::to_string(summary.size()) + " byte summary)"
                               : "differs: " + differing.front();
  return r;
}

/// Mean truncated RMSE of NAF-DEI and NAF-naive on the desk preset.
inline CheckResult dei_vs_naive(std::size_t seeds = 5) {
  CheckResult r{8, "desk w=0.1: NAF-DEI RMSE <= NAF-naive, gap >= 10%", true, ""};
  BenchConfig bench;
  apply_preset(bench, "desk");
  const SimConfig base = bench.cell_config(0.1);
  std::map<EstimatorKind, std::vector<double>> rmse;
  for (EstimatorKind kind : {EstimatorKind::NafDei, EstimatorKind::NafNaive}) {
    for (std::size_t i = 0; i < seeds; ++i) {
      SimConfig cfg = base;
      cfg.estimator.kind = kind;
      rmse[kind].push_back(run_simulation(cfg, bench.base_seed + i).rmse().value_or(INFINITY));
    }
  }
  const double dei = detail::mean_of(rmse[EstimatorKind::NafDei]);
  const double naive = detail::mean_of(rmse[EstimatorKind::NafNaive]);
  const double gap = (naive - dei) / naive;
  r.passed = dei <= naive && gap >= 0.10;
  r.detail = "naf-dei " + detail::num(dei) + " s vs naf-naive " + detail::num(naive) + " s (gap " +
             detail::num(100.0 * gap, 3) + "%)";
  return r;
}

/// Paper preset at half duration, w = 0.1.
inline CheckResult dei_vs_poisson(std::size_t seeds = 5, double duration = 900.0) {
  CheckResult r{9, "paper preset w=0.1: NAF-DEI hit >= Poisson + 5pp, invalidations <= Poisson + 5pp", true, ""};
  BenchConfig bench;
  apply_preset(bench, "paper");
  SimConfig base = bench.cell_config(0.1);
  base.workload.duration = duration;
  base.estimator.poisson_max_ttl = 300.0;
  std::map<EstimatorKind, std::vector<double>> hit, inv;
  for (EstimatorKind kind : {EstimatorKind::NafDei, EstimatorKind::Poisson}) {
    for (std::size_t i = 0; i < seeds; ++i) {
      SimConfig cfg = base;
      cfg.estimator.kind = kind;
      const RunResult res = run_simulation(cfg, bench.base_seed + i);
      hit[kind].push_back(res.hit_rate());
      inv[kind].push_back(res.invalidation_rate());
    }
  }
  const double hd = detail::mean_of(hit[EstimatorKind::NafDei]), hp = detail::mean_of(hit[EstimatorKind::Poisson]);
  const double id = detail::mean_of(inv[EstimatorKind::NafDei]), ip = detail::mean_of(inv[EstimatorKind::Poisson]);
  r.passed = hd - hp >= 0.05 && id - ip <= 0.05;
  r.detail = "hit " + detail::num(hd) + " vs " + detail::num(hp) + ", invalidation " + detail::num(id) + " vs " +
             detail::num(ip) + " (" + std::to_string(seeds) + " seeds, " + detail::num(duration) + " s)";
  return r;
}

inline CheckResult calibration() {
  CheckResult r{10, "throughput within 5% and 4/154 ms latencies in trace.csv", true, ""};
  BenchConfig cfg;
  apply_preset(cfg, "desk");
  cfg.runs = 1;
  cfg.estimators = {EstimatorKind::Poisson};
  detail::TempDir dir("calib");
  cfg.out_dir = dir.path.string();
  const ExperimentResult res = run_experiment(cfg);
  const double target = cfg.sim.workload.target_throughput;
  const double achieved = res.cells.front().runs.front().throughput;
  const double rel = std::abs(achieved - target) / target;

  std::ifstream trace(dir.path / "trace.csv");
  std::string line;
  std::getline(trace, line);
  std::size_t hits = 0, misses = 0, bad = 0;
  while (std::getline(trace, line)) {
    const auto outcome_end = line.rfind(',');
    const auto outcome_begin = line.rfind(',', outcome_end - 1) + 1;
    const std::string outcome = line.substr(outcome_begin, outcome_end - outcome_begin);
    const std::string latency = line.substr(outcome_end + 1);
    if (outcome == "hit" || outcome == "stale_hit") {
      ++hits;
      if (latency != "4.000") ++bad;
    } else {
      ++misses;
      if (latency != "154.000") ++bad;
    }
  }
  r.passed = rel <= 0.05 && hits > 0 && misses > 0 && bad == 0;
  r.detail = "throughput " + detail::num(achieved) + " ops/s for target " + detail::num(target) + "; " +
             std::to_string(hits) + " hit rows at 4.000 ms, " + std::to_string(misses) + " origin rows at 154.000 ms, " +
             std::to_string(bad) + " off";
  return r;
}

inline CheckResult statistical_sanity() {
  CheckResult r{11, "Zipf chi-square and exponential inter-arrival KS", true, ""};
  WorkloadSpec spec;  // desk scale
  ZipfSampler zipf(spec.query_count, spec.zipf_s);
  Rng rng(mix_seed(11, 7));
  const std::size_t draws = 100000;
  std::vector<double> counts(spec.query_count, 0.0);
  for (std::size_t i = 0; i < draws; ++i) counts[zipf.sample(rng) - 1] += 1.0;
  double chi2 = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double expected = static_cast<double>(draws) * zipf.pmf(k + 1);
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  const double p_zipf = boost::math::cdf(boost::math::complement(dist, chi2));

  SimConfig cfg;
  cfg.record_timing = true;
  const RunResult res = run_simulation(cfg, 11);
  std::vector<double> gaps;
  for (const auto& arrivals : res.arrivals) {
    double prev = 0.0;
    for (double t : arrivals) {
      gaps.push_back(t - prev);
      prev = t;
    }
  }
  const double mean = static_cast<double>(spec.total_connections()) / spec.target_throughput;
  const double d = detail::ks_statistic(gaps, [mean](double x) { return 1.0 - std::exp(-x / mean); });
  const double p_ks = detail::ks_pvalue(d, gaps.size());
  r.passed = p_zipf > 0.01 && p_ks > 0.01;
  r.detail = "chi2 p = " + detail::num(p_zipf) + " (" + std::to_string(draws) + " draws), KS p = " + detail::num(p_ks) +
             " (" + std::to_string(gaps.size()) + " gaps)";
  return r;
}

/// Criteria cheap enough for `ttl-lab check`.
inline std::vector<std::function<CheckResult()>> fast_checks() {
  return {poisson_exact,
          [] { return naf_identities(); },
          [] { return gradient_check(); },
          [] { return oracle_equivalence(); },
          [] { return invalidation_equivalence(); },
          dei_timing,
          determinism,
          calibration,
          statistical_sanity};
}

inline std::vector<std::function<CheckResult()>> all_checks() {
  return {poisson_exact,
          [] { return naf_identities(); },
          [] { return gradient_check(); },
          [] { return oracle_equivalence(); },
          [] { return invalidation_equivalence(); },
          dei_timing,
          determinism,
          [] { return dei_vs_naive(); },
          [] { return dei_vs_poisson(); },
          calibration,
          statistical_sanity};
}

inline std::string format(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + " criterion " + std::to_string(r.id) + ": " + r.name + " -- " +
         r.detail;
}

}  // namespace ttllab::checks
