#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "uvdro/csv.hpp"
#include "uvdro/datagen.hpp"
#include "uvdro/errors.hpp"
#include "uvdro/harness.hpp"

namespace {

using namespace uvdro;

constexpr int kOk = 0;
constexpr int kRecordFailed = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
  std::string input;
  bool quiet = false;
};

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

ExperimentConfig load(const Options& opt) {
  ExperimentConfig cfg = load_config(opt.config);
  if (opt.seed) cfg.seeds = {*opt.seed};
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "results";
  return cfg;
}

int emit(const std::vector<RunRecord>& records, const ExperimentConfig& cfg, const Options& opt) {
  const auto paths = report(records, cfg.output_dir, report_format_from_string(opt.format));
  for (const auto& p : paths) std::cout << "wrote " << p << '\n';
  for (const auto& r : records)
    if (!r.ok()) return kRecordFailed;
  return kOk;
}

int cmd_generate(const Options& opt) {
  const ExperimentConfig cfg = load(opt);
  std::filesystem::create_directories(cfg.output_dir);
  const GridPoint point = grid_points(cfg).front();
  const PreparedRun run = prepare_run(cfg, point, cfg.seeds.front());
  const std::filesystem::path dir(cfg.output_dir);
  write_dataset_csv(run.train, (dir / "train.csv").string());
  if (run.validation.size() > 0) write_dataset_csv(run.validation, (dir / "validation.csv").string());
  write_dataset_csv(run.test, (dir / "test.csv").string());
  std::cout << "wrote " << (dir / "train.csv").string() << " (" << run.train.size() << " rows)\n";
  if (run.train.uv_embeddings) {
    write_embeddings_csv(*run.train.uv_embeddings, (dir / "train_embeddings.csv").string());
    std::cout << "wrote " << (dir / "train_embeddings.csv").string() << '\n';
  }
  return kOk;
}

int cmd_train(const Options& opt) {
  ExperimentConfig cfg = load(opt);
  cfg.seeds.resize(1);
  const GridPoint first = grid_points(cfg).front();
  cfg.q_grid = {first.q};
  cfg.alpha_star_grid = {first.alpha_star};
  return emit(run_experiment(cfg, opt.quiet ? Logger{} : Logger{log_line}), cfg, opt);
}

int cmd_sweep(const Options& opt) {
  const ExperimentConfig cfg = load(opt);
  return emit(run_experiment(cfg, opt.quiet ? Logger{} : Logger{log_line}), cfg, opt);
}

int cmd_ablate(const Options& opt) {
  const ExperimentConfig cfg = load(opt);
  if (cfg.ablation_fractions.empty()) throw ConfigError("ablation.fractions is required for ablate");
  const AblationResult res =
      run_shuffle_ablation(cfg, cfg.ablation_fractions, opt.quiet ? Logger{} : Logger{log_line});
  for (std::size_t k = 0; k < res.fractions.size(); ++k)
    std::cout << "fraction " << csv::format_double(res.fractions[k]) << " mean accuracy "
              << csv::format_double(res.mean_accuracy[k]) << '\n';
  std::cout << "spearman(fraction, accuracy) averaged over seeds: "
            << csv::format_double(res.mean_spearman) << '\n';
  return emit(res.records, cfg, opt);
}

int cmd_report(const Options& opt) {
  if (opt.input.empty()) throw ConfigError("report needs --input <records file>");
  const auto records = read_records(opt.input);
  ExperimentConfig cfg;
  cfg.output_dir = opt.out.empty() ? std::filesystem::path(opt.input).parent_path().string() : opt.out;
  if (cfg.output_dir.empty()) cfg.output_dir = ".";
  return emit(records, cfg, opt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust training over unmeasured variables: experiment runner"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "Experiment config (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Override the replicate seeds with a single seed");
    sub->add_option("--format", opt.format, "Record file format")->check(CLI::IsMember({"csv", "jsonl"}));
    sub->add_flag("-q,--quiet", opt.quiet, "Suppress progress messages");
  };

  auto* gen = app.add_subcommand("generate", "Write the synthetic datasets of the first grid point to CSV");
  auto* tr = app.add_subcommand("train", "Run every objective at the first grid point for one seed");
  auto* sw = app.add_subcommand("sweep", "Run the full grid");
  auto* ab = app.add_subcommand("ablate", "Shuffle ablation over the configured fractions");
  auto* rp = app.add_subcommand("report", "Re-aggregate an existing records file");
  for (auto* s : {gen, tr, sw, ab}) add_common(s, true);
  add_common(rp, false);
  rp->add_option("--input", opt.input, "records.csv or records.jsonl")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return cmd_generate(opt);
    if (*tr) return cmd_train(opt);
    if (*sw) return cmd_sweep(opt);
    if (*ab) return cmd_ablate(opt);
    return cmd_report(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRecordFailed;
  }
}
