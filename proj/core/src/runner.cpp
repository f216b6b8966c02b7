#include "asd/runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "asd/checkpoint.hpp"
#include "asd/eval.hpp"
#include "asd/plot.hpp"
#include "asd/trainer.hpp"

namespace asd {

namespace fs = std::filesystem;

const char* const kOutputRootEnv = "ASD_OUTPUT_ROOT";

std::string resolve_output_dir(const std::string& configured) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root && fs::path(configured).is_relative())
    return (fs::path(root) / configured).string();
  return configured;
}

void override_master_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.dataset.seed = seed;
  cfg.attack.seed = seed;
  cfg.attack.pattern_seed = seed;
  cfg.trainer.seed = seed;
  cfg.seed_draw = seed;
}

namespace {

struct ExperimentData {
  PoisonedDataset train;
  LabeledDataset clean_test;
  PoisonedDataset attack_test;
  TriggerSpec trigger;
  PoisonPolicy policy;
};

LabeledDataset build_split(const DatasetConfig& d, int class_count, bool test_split) {
  if (d.source == "synthetic") {
    SyntheticSpec spec;
    spec.train_size = d.train_size;
    spec.test_size = d.test_size;
    spec.class_count = class_count;
    spec.hard_fraction = d.hard_fraction;
    spec.seed = d.seed;
    return generate_synthetic(spec, test_split);
  }
  LabeledDataset full = load_cifar10(d.cifar_root, test_split);
  if (d.subset_fraction < 1.0) return stratified_subset(full, d.subset_fraction, d.seed);
  return full;
}

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
  const ModelSpec& m = cfg.trainer.model;
  const LabeledDataset train_clean = build_split(cfg.dataset, m.class_count, false);
  LabeledDataset test = build_split(cfg.dataset, m.class_count, true);
  if (train_clean.images.empty() || test.images.empty())
    throw std::runtime_error("dataset build produced an empty split");
  const Image& probe = train_clean.images.front();
  if (probe.channels != m.input_channels || probe.height != m.input_height ||
      probe.width != m.input_width)
    throw std::runtime_error("dataset image shape does not match the model input");

  ExperimentData data;
  data.trigger = trigger_from_config(cfg.attack, probe.channels, probe.height, probe.width);
  data.policy = policy_from_config(cfg.attack);
  data.train = build_poisoned_dataset(train_clean, data.policy, data.trigger);
  data.attack_test = build_attack_test_set(test, data.policy, data.trigger);
  data.clean_test = std::move(test);
  return data;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

/// Persist the resolved config; an existing one must match exactly, so a run
/// directory can never mix artifacts from two different configurations.
void persist_config(const fs::path& run_dir, const ExperimentConfig& cfg) {
  const fs::path path = run_dir / "config.txt";
  const std::string text = serialize_config(cfg);
  if (fs::exists(path)) {
    if (read_text_file(path) != text)
      throw std::runtime_error("run directory " + run_dir.string() +
                               " was created with a different config");
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

/// Drops tabular rows belonging to epochs >= resume_epoch; they are
/// regenerated identically when training re-runs those epochs.
void drop_rows_from_epoch(const fs::path& path, int epoch_col, int resume_epoch) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    int col = 0;
    int epoch = -1;
    while (std::getline(row, field, '\t')) {
      if (col == epoch_col) {
        epoch = std::stoi(field);
        break;
      }
      ++col;
    }
    if (epoch < 0) throw std::runtime_error("malformed row in " + path.string());
    if (epoch < resume_epoch) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot rewrite " + path.string());
  for (const auto& l : keep) out << l << "\n";
}

void write_summary(const fs::path& path, const RunSummary& s, const MetricsRecord* final_row) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  f << "mode = " << s.mode << "\n";
  f << "epochs_completed = " << s.epochs_completed << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", s.final_acc);
  f << "final_acc = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", s.final_asr);
  f << "final_asr = " << buf << "\n";
  if (final_row && s.mode == "train-asd") {
    std::snprintf(buf, sizeof(buf), "%.17g", final_row->split_purity);
    f << "final_split_purity = " << buf << "\n";
    f << "final_pool_clean_size = " << final_row->pool_clean_size << "\n";
  }
}

RunSummary run_training(const ExperimentConfig& cfg, const RunOptions& opts,
                        const fs::path& run_dir) {
  const bool defense = cfg.mode == "train-asd";
  const ExperimentData data = build_experiment_data(cfg);
  const std::string metrics_path = (run_dir / "metrics.tsv").string();
  const std::string losses_path = (run_dir / "losses.tsv").string();
  const std::string pools_path = (run_dir / "pools.tsv").string();

  TrainState state;
  if (opts.resume) {
    const auto manifest = latest_checkpoint(run_dir.string());
    if (!manifest)
      throw std::runtime_error("nothing to resume: no checkpoint in " + run_dir.string());
    state = load_checkpoint(*manifest, cfg.trainer);
    drop_rows_from_epoch(metrics_path, 0, state.epoch);
    drop_rows_from_epoch(losses_path, 4, state.epoch);
    drop_rows_from_epoch(pools_path, 0, state.epoch);
  } else {
    if (fs::exists(metrics_path))
      throw std::runtime_error("run directory already holds results (" + metrics_path +
                               "); pass --resume or pick a fresh output directory");
    state = make_train_state(cfg.trainer);
  }

  SeedSet seeds;
  if (defense)
    seeds = draw_seed_samples(data.train, cfg.trainer.split.seed_per_class, cfg.seed_draw);

  const int t3 = cfg.trainer.schedule.t3;
  const EpochObserver observer = [&](const EpochReport& r, TrainState& st) {
    const bool last = r.epoch + 1 == t3;
    if (cfg.eval_every > 0 && (r.epoch % cfg.eval_every == 0 || last))
      append_metrics(metrics_path, r.metrics);
    if (defense) {
      export_pool_snapshot(pools_path, r.epoch, r.pools, data.train);
      export_loss_distribution(losses_path, r.ranking_losses, data.train, r.epoch);
    }
    if (cfg.checkpoint_every > 0 && !last && st.epoch % cfg.checkpoint_every == 0)
      save_checkpoint(run_dir.string(), st, cfg.trainer);
  };

  TrainResult result;
  if (defense)
    result = run_asd(state, data.train, data.clean_test, data.attack_test,
                     cfg.attack.target_label, seeds, cfg.trainer, observer);
  else
    result = run_supervised(state, data.train, data.clean_test, data.attack_test,
                            cfg.attack.target_label, cfg.trainer, observer);

  const std::string manifest = save_checkpoint(run_dir.string(), state, cfg.trainer);

  MetricsRecord final_row;
  if (!result.history.empty()) {
    final_row = result.history.back();
  } else {
    const auto rows = read_metrics(metrics_path);
    if (rows.empty()) throw std::runtime_error("training produced no metrics rows");
    final_row = rows.back();
  }

  RunSummary s;
  s.run_dir = run_dir.string();
  s.mode = cfg.mode;
  s.epochs_completed = state.epoch;
  s.final_acc = final_row.acc;
  s.final_asr = final_row.asr;
  write_summary(run_dir / "summary.txt", s, &final_row);
  s.outputs = {metrics_path, manifest, (run_dir / "summary.txt").string()};
  if (defense) {
    s.outputs.push_back(losses_path);
    s.outputs.push_back(pools_path);
  }
  return s;
}

RunSummary run_eval(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto manifest = latest_checkpoint(run_dir.string());
  if (!manifest) throw std::runtime_error("no checkpoint found in " + run_dir.string());
  TrainState state = load_checkpoint(*manifest, cfg.trainer);
  const ExperimentData data = build_experiment_data(cfg);

  NetClassifier clf(*state.model);
  RunSummary s;
  s.run_dir = run_dir.string();
  s.mode = cfg.mode;
  s.epochs_completed = state.epoch;
  s.final_acc = compute_acc(clf, data.clean_test);
  s.final_asr = compute_asr(clf, data.attack_test, cfg.attack.target_label);
  write_summary(run_dir / "summary-eval.txt", s, nullptr);
  s.outputs = {(run_dir / "summary-eval.txt").string()};
  return s;
}

RunSummary run_poison(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const ExperimentData data = build_experiment_data(cfg);
  const fs::path dataset_dir = run_dir / "dataset";
  save_dataset_artifact({data.train, data.policy, data.trigger}, dataset_dir.string());

  RunSummary s;
  s.run_dir = run_dir.string();
  s.mode = cfg.mode;
  s.outputs = {(dataset_dir / "manifest.txt").string()};
  return s;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  const fs::path run_dir(resolve_output_dir(cfg.output_dir));
  fs::create_directories(run_dir);

  if (cfg.mode == "plot") {
    RunSummary s;
    s.run_dir = run_dir.string();
    s.mode = cfg.mode;
    s.outputs = render_plots(run_dir.string(), opts.plot_kind);
    return s;
  }

  persist_config(run_dir, cfg);
  if (cfg.mode == "poison") return run_poison(cfg, run_dir);
  if (cfg.mode == "eval") return run_eval(cfg, run_dir);
  if (cfg.mode == "train-asd" || cfg.mode == "train-nodefense")
    return run_training(cfg, opts, run_dir);
  throw std::runtime_error("unknown mode: " + cfg.mode);
}

}  // namespace asd
