// rd3d: synthetic data, training, inference, evaluation, ablation and self-checks.
// Exit codes: 0 success, 1 runtime error, 2 configuration or usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rd3d/ablation.hpp"
#include "rd3d/checks.hpp"
#include "rd3d/config.hpp"
#include "rd3d/data.hpp"
#include "rd3d/metrics.hpp"
#include "rd3d/train.hpp"

namespace fs = std::filesystem;

namespace {

struct Args {
  std::string config;
  std::vector<std::string> overrides;
  std::string data, out, ckpt, resume, pred, gt, dataset = "test";
  std::uint64_t check_seed = 0;
  std::size_t draws = 100;
  double w1_perturbation = 0.0;
};

void add_config_flags(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override one configuration key, e.g. --set epochs=5 (repeatable)");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw rd3d::IoError(dir + ": cannot create directory: " + ec.message());
}

int run_synth(const Args& a) {
  const auto cfg = rd3d::load_config(a.config, a.overrides);
  const auto samples = rd3d::generate_synthetic(cfg.synth);
  rd3d::write_dataset(a.out, samples);
  std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return 0;
}

int run_train(const Args& a) {
  const auto cfg = rd3d::load_config(a.config, a.overrides);
  const auto data = rd3d::load_dataset(a.data);
  ensure_dir(a.out);
  std::optional<rd3d::Checkpoint> resume;
  if (!a.resume.empty()) resume = rd3d::Checkpoint::load(a.resume);

  const fs::path ckpt = fs::path(a.out) / "checkpoint.rd3d";
  const fs::path log_path = fs::path(a.out) / "train.log";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw rd3d::IoError(log_path.string() + ": cannot open for writing");

  const auto result = rd3d::train(cfg.train, data, resume ? &*resume : nullptr, &log, [&](const rd3d::Checkpoint& c) {
    c.save(ckpt);
    std::cerr << "epoch " << c.epoch << "/" << cfg.train.epochs << " saved " << ckpt.string() << "\n";
  });
  result.final.save(ckpt);
  if (!result.log.empty()) std::cout << "final loss " << result.log.back().loss << "\n";
  std::cout << "checkpoint " << ckpt.string() << "\nlog " << log_path.string() << "\n";
  return 0;
}

int run_infer(const Args& a) {
  const auto ckpt = rd3d::Checkpoint::load(a.ckpt);
  auto model = rd3d::restore_model(ckpt);
  const auto data = rd3d::load_dataset(a.data, false);
  ensure_dir(a.out);
  for (const auto& s : data) rd3d::save_map(fs::path(a.out) / (s.id + ".pgm"), rd3d::infer(*model, s));
  std::cout << "wrote " << data.size() << " saliency maps to " << a.out << "\n";
  return 0;
}

int run_eval(const Args& a) {
  const auto cfg = rd3d::load_config(a.config, a.overrides);
  // A dataset root is accepted as well as a bare mask directory.
  const fs::path gt_dir = fs::is_directory(fs::path(a.gt) / "gt") ? fs::path(a.gt) / "gt" : fs::path(a.gt);
  const auto ids = rd3d::list_ids(gt_dir, ".pgm");
  if (ids.empty()) throw rd3d::IoError(gt_dir.string() + ": no .pgm ground-truth masks");
  std::vector<rd3d::metrics::EvalPair> pairs;
  for (const auto& id : ids) {
    const fs::path p = fs::path(a.pred) / (id + ".pgm");
    if (!fs::exists(p)) throw rd3d::IoError(p.string() + ": missing prediction for ground truth '" + id + "'");
    pairs.push_back({id, rd3d::load_map(p), rd3d::load_mask(gt_dir / (id + ".pgm"))});
  }
  const auto e = rd3d::metrics::evaluate_set(pairs, cfg.metric);
  std::cout << rd3d::metrics::report_table(a.dataset, e);
  return 0;
}

int run_ablate(const Args& a) {
  const auto cfg = rd3d::load_config(a.config, a.overrides);
  const auto data = rd3d::load_dataset(a.data);
  ensure_dir(a.out);
  const auto result = rd3d::run_ablation(cfg, data, &std::cerr);
  const std::string table = result.table(), summary = result.summary();
  std::ofstream(fs::path(a.out) / "ablation.tsv") << table;
  std::ofstream(fs::path(a.out) / "summary.txt") << summary;
  std::cout << table << summary;
  return result.identities.inflation_triples() && result.identities.two_stream_doubles() ? 0 : 1;
}

int run_check(const Args& a) {
  const auto results = rd3d::checks::oracle_suite({.seed = a.check_seed, .eq1_draws = a.draws, .w1_perturbation = a.w1_perturbation});
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "\t" << r.name << "\t" << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D salient object detection with 3D convolutional pre-fusion"};
  app.require_subcommand(1);
  Args a;

  auto* synth = app.add_subcommand("synth", "write a synthetic RGB-D dataset");
  add_config_flags(synth, a);
  synth->add_option("--out", a.out, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint.rd3d and train.log");
  add_config_flags(train, a);
  train->add_option("--data", a.data, "dataset directory with rgb/, depth/ and gt/")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", a.out, "output directory")->required();
  train->add_option("--resume", a.resume, "continue from a checkpoint written by train")->check(CLI::ExistingFile);

  auto* infer = app.add_subcommand("infer", "write 8-bit saliency maps, one <id>.pgm per input");
  infer->add_option("--ckpt", a.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", a.data, "dataset directory with rgb/ and depth/")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--out", a.out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "print S-alpha, max F-beta, max E-phi and MAE as TSV");
  add_config_flags(eval, a);
  eval->add_option("--pred", a.pred, "directory of predicted <id>.pgm maps")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", a.gt, "directory of <id>.pgm masks, or a dataset root")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--dataset", a.dataset, "name printed in the dataset column")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the backbone and decoder variants");
  add_config_flags(ablate, a);
  ablate->add_option("--data", a.data, "dataset directory; the last ablation_test_count ids are held out")
      ->required()
      ->check(CLI::ExistingDirectory);
  ablate->add_option("--out", a.out, "output directory for ablation.tsv and summary.txt")->required();

  auto* check = app.add_subcommand("check", "run the built-in equivalence and gradient checks");
  check->add_option("--seed", a.check_seed, "random seed for the checks")->capture_default_str();
  check->add_option("--draws", a.draws, "random draws for the pre-fusion identity")->capture_default_str();
  check->add_option("--w1-perturbation", a.w1_perturbation,
                    "noise added to the first temporal kernel slice of the stem (a deliberate fault)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    // Top-level help lists every subcommand together with its flags.
    const auto subs = app.get_subcommands();
    std::cout << (subs.empty() ? app.help("", CLI::AppFormatMode::All) : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(a);
    if (train->parsed()) return run_train(a);
    if (infer->parsed()) return run_infer(a);
    if (eval->parsed()) return run_eval(a);
    if (ablate->parsed()) return run_ablate(a);
    if (check->parsed()) return run_check(a);
  } catch (const rd3d::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
