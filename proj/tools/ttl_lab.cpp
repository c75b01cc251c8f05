#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ttllab/bench.hpp"
#include "ttllab/checks.hpp"

namespace {

int run_command(const std::string& config_path, const std::optional<std::string>& preset,
                const std::optional<std::string>& estimator, const std::optional<std::uint64_t>& seed,
                const std::optional<std::size_t>& runs, const std::optional<std::string>& out_dir,
                const std::optional<std::string>& trace_query, bool replay_log, bool quiet) {
  using namespace ttllab;
  BenchConfig cfg = load_config_file(config_path, preset);
  if (estimator) {
    cfg.estimators.clear();
    for (const std::string& k : detail::split_list(*estimator)) cfg.estimators.push_back(parse_estimator_kind(k));
  }
  if (seed) cfg.base_seed = *seed;
  if (runs) cfg.runs = *runs;
  if (out_dir) cfg.out_dir = *out_dir;
  if (trace_query) cfg.trace_query = *trace_query;
  if (replay_log) cfg.replay_log = true;

  const ExperimentResult res = run_experiment(cfg, quiet ? nullptr : &std::cerr);
  print_report(res, std::cout);
  for (const std::string& f : res.files) std::cout << "wrote " << f << "\n";
  return 0;
}

int check_command(bool full) {
  using namespace ttllab::checks;
  int failed = 0;
  for (const auto& check : full ? all_checks() : fast_checks()) {
    const CheckResult r = check();
    std::cout << format(r) << std::endl;
    if (!r.passed) ++failed;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TTL estimation lab: web-cache simulator with Poisson and NAF TTL estimators"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment and write CSV reports");
  std::string config_path;
  std::optional<std::string> preset, estimator, out_dir, trace_query;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  bool replay_log = false, quiet = false;
  run->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  run->add_option("--preset", preset, "base profile")->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--estimator", estimator, "estimator kind(s): poisson, fixed, naf-dei, naf-naive (comma list)");
  run->add_option("--seed", seed, "base seed; repetition i uses seed + i");
  run->add_option("--runs", runs, "repetitions per cell")->check(CLI::PositiveNumber);
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--trace-query", trace_query, "query for querytrace.csv: auto or an id");
  run->add_flag("--replay-log", replay_log, "also write replay_log.csv");
  run->add_flag("-q,--quiet", quiet, "no per-run progress on stderr");

  auto* check = app.add_subcommand("check", "run the invariant and oracle self-tests");
  bool full = false;
  check->add_flag("--full", full, "include the directional result criteria (slow)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_command(config_path, preset, estimator, seed, runs, out_dir, trace_query, replay_log, quiet);
    if (*check) return check_command(full);
  } catch (const std::exception& e) {
    std::cerr << "ttl-lab: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
