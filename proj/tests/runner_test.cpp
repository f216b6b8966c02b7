#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "asd/runner.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asd;

namespace {

/// Micro experiment: 40 synthetic train images, 10 test, 1/2/3 schedule,
/// width-2 extractor. Each training run takes a few seconds.
ExperimentConfig micro_config(const std::string& out_dir, const std::string& mode) {
  ExperimentConfig cfg = parse_config_text(
      "dataset {\n  train_size = 40\n  test_size = 10\n  hard_fraction = 0\n}\n"
      "defense {\n  seed_per_class = 1\n  growth_per_step = 1\n  t1 = 1\n  t2 = 2\n  t3 = 3\n"
      "  virtual_batch = 32\n}\n"
      "mixmatch {\n  batch_size = 16\n  crop_pad = 2\n}\n"
      "model {\n  base_width = 2\n}\n"
      "train {\n  checkpoint_every = 1\n}\n");
  cfg.mode = mode;
  cfg.output_dir = out_dir;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file: " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// True when the records agree on everything except the timing column.
void check_same_metrics(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].epoch == b[i].epoch);
    CHECK(a[i].stage == b[i].stage);
    CHECK(a[i].acc == b[i].acc);
    CHECK(a[i].asr == b[i].asr);
    CHECK(a[i].pool_clean_size == b[i].pool_clean_size);
    CHECK(a[i].poisoned_in_clean_pool == b[i].poisoned_in_clean_pool);
    CHECK(a[i].split_purity == b[i].split_purity);
  }
}

}  // namespace

TEST_CASE("master seed override reaches every seeded component") {
  ExperimentConfig cfg = micro_config("unused", "train-asd");
  override_master_seed(cfg, 424242);
  CHECK(cfg.dataset.seed == 424242);
  CHECK(cfg.attack.seed == 424242);
  CHECK(cfg.attack.pattern_seed == 424242);
  CHECK(cfg.trainer.seed == 424242);
  CHECK(cfg.seed_draw == 424242);
}

TEST_CASE("relative output directories resolve under the environment root") {
  asd::test::TempDir tmp;
  REQUIRE(setenv(kOutputRootEnv, tmp.path().c_str(), 1) == 0);
  CHECK(resolve_output_dir("runs/exp") == tmp.file("runs/exp"));
  CHECK(resolve_output_dir("/absolute/path") == "/absolute/path");
  REQUIRE(unsetenv(kOutputRootEnv) == 0);
  CHECK(resolve_output_dir("runs/exp") == "runs/exp");
}

TEST_CASE("the poison mode persists a loadable dataset artifact") {
  asd::test::TempDir tmp;
  const std::string dir = tmp.file("poison-run");
  const RunSummary summary = run_experiment(micro_config(dir, "poison"));
  CHECK(summary.mode == "poison");
  CHECK(summary.run_dir == dir);

  const DatasetArtifact artifact = load_dataset_artifact(dir + "/dataset");
  CHECK(artifact.data.size() == 40);
  CHECK(artifact.data.poison_count() == 2);  // floor(0.05 * 40)
  CHECK(artifact.policy.target_label == 3);
  CHECK(artifact.trigger.kind == TriggerKind::badnets_patch);
  for (const auto& s : artifact.data.samples)
    if (s.is_poisoned) CHECK(s.assigned_label == 3);

  CHECK(std::filesystem::exists(dir + "/config.txt"));
}

TEST_CASE("unknown modes are rejected") {
  asd::test::TempDir tmp;
  CHECK_THROWS_WITH(run_experiment(micro_config(tmp.file("x"), "dance")),
                    doctest::Contains("unknown mode"));
}

TEST_CASE("defense runs are reproducible and guard their output directory") {
  asd::test::TempDir tmp;
  const std::string dir_a = tmp.file("run-a");
  const std::string dir_b = tmp.file("run-b");

  const RunSummary a = run_experiment(micro_config(dir_a, "train-asd"));
  CHECK(a.epochs_completed == 3);
  CHECK(a.final_acc >= 0.0);
  CHECK(a.final_acc <= 1.0);

  // everything the defense writes is present
  for (const char* name :
       {"/config.txt", "/metrics.tsv", "/losses.tsv", "/pools.tsv", "/summary.txt",
        "/checkpoint-3.bin", "/checkpoint-3.manifest"})
    CHECK_MESSAGE(std::filesystem::exists(dir_a + name), "missing " << name);

  // a second run of the same config into the same directory needs --resume
  CHECK_THROWS_WITH(run_experiment(micro_config(dir_a, "train-asd")),
                    doctest::Contains("already holds results"));

  // a different config may not reuse the directory at all
  ExperimentConfig altered = micro_config(dir_a, "train-asd");
  altered.trainer.mixmatch.lambda_u = 3.0;
  RunOptions resume;
  resume.resume = true;
  CHECK_THROWS_WITH(run_experiment(altered, resume), doctest::Contains("different config"));

  // resuming a finished run changes nothing
  const std::string metrics_before = slurp(dir_a + "/metrics.tsv");
  const RunSummary again = run_experiment(micro_config(dir_a, "train-asd"), resume);
  CHECK(again.epochs_completed == 3);
  CHECK(slurp(dir_a + "/metrics.tsv") == metrics_before);

  // an independent run of the same config matches in everything but timing
  const RunSummary b = run_experiment(micro_config(dir_b, "train-asd"));
  (void)b;
  check_same_metrics(read_metrics(dir_a + "/metrics.tsv"), read_metrics(dir_b + "/metrics.tsv"));
  CHECK(slurp(dir_a + "/losses.tsv") == slurp(dir_b + "/losses.tsv"));
  CHECK(slurp(dir_a + "/pools.tsv") == slurp(dir_b + "/pools.tsv"));
  CHECK(slurp(dir_a + "/summary.txt") == slurp(dir_b + "/summary.txt"));
  CHECK(slurp(dir_a + "/checkpoint-3.bin") == slurp(dir_b + "/checkpoint-3.bin"));
}

TEST_CASE("an interrupted run resumes into the same results") {
  asd::test::TempDir tmp;
  const std::string straight = tmp.file("straight");
  const std::string broken = tmp.file("broken");

  run_experiment(micro_config(straight, "train-asd"));
  run_experiment(micro_config(broken, "train-asd"));

  // wind the second run back to its epoch-2 checkpoint
  std::filesystem::remove(broken + "/checkpoint-3.bin");
  std::filesystem::remove(broken + "/checkpoint-3.manifest");
  RunOptions resume;
  resume.resume = true;
  const RunSummary resumed = run_experiment(micro_config(broken, "train-asd"), resume);
  CHECK(resumed.epochs_completed == 3);

  check_same_metrics(read_metrics(straight + "/metrics.tsv"), read_metrics(broken + "/metrics.tsv"));
  CHECK(slurp(straight + "/losses.tsv") == slurp(broken + "/losses.tsv"));
  CHECK(slurp(straight + "/pools.tsv") == slurp(broken + "/pools.tsv"));
  CHECK(slurp(straight + "/summary.txt") == slurp(broken + "/summary.txt"));
  CHECK(slurp(straight + "/checkpoint-3.bin") == slurp(broken + "/checkpoint-3.bin"));

  // resume without any checkpoint is reported
  const std::string empty_dir = tmp.file("nothing");
  CHECK_THROWS_WITH(run_experiment(micro_config(empty_dir, "train-asd"), resume),
                    doctest::Contains("nothing to resume"));
}

TEST_CASE("the eval mode reports on the latest checkpoint without training") {
  asd::test::TempDir tmp;
  const std::string dir = tmp.file("run");
  run_experiment(micro_config(dir, "train-asd"));
  const std::string metrics_before = slurp(dir + "/metrics.tsv");

  const RunSummary summary = run_experiment(micro_config(dir, "eval"));
  CHECK(summary.mode == "eval");
  CHECK(std::filesystem::exists(dir + "/summary-eval.txt"));
  CHECK(slurp(dir + "/metrics.tsv") == metrics_before);  // nothing retrained

  const std::string text = slurp(dir + "/summary-eval.txt");
  CHECK(text.find("acc") != std::string::npos);
  CHECK(text.find("asr") != std::string::npos);

  CHECK_THROWS_WITH(run_experiment(micro_config(tmp.file("fresh"), "eval")),
                    doctest::Contains("no checkpoint found"));
}

TEST_CASE("the plot mode renders from a finished run directory") {
  asd::test::TempDir tmp;
  const std::string dir = tmp.file("run");
  run_experiment(micro_config(dir, "train-asd"));

  RunOptions opts;
  opts.plot_kind = "all";
  const RunSummary summary = run_experiment(micro_config(dir, "plot"), opts);
  CHECK(summary.mode == "plot");
  REQUIRE(summary.outputs.size() == 5);  // 3 loss histograms + curves + purity
  for (const auto& p : summary.outputs) CHECK(std::filesystem::exists(p));
  CHECK(std::filesystem::exists(dir + "/plots/acc-asr.png"));
  CHECK(std::filesystem::exists(dir + "/plots/pool-purity.png"));
}

TEST_CASE("the no-defense baseline writes metrics but no pool dumps") {
  asd::test::TempDir tmp;
  const std::string dir = tmp.file("baseline");
  const RunSummary summary = run_experiment(micro_config(dir, "train-nodefense"));
  CHECK(summary.epochs_completed == 3);
  CHECK(std::filesystem::exists(dir + "/metrics.tsv"));
  CHECK(std::filesystem::exists(dir + "/summary.txt"));
  CHECK(!std::filesystem::exists(dir + "/losses.tsv"));
  CHECK(!std::filesystem::exists(dir + "/pools.tsv"));
  const auto rows = read_metrics(dir + "/metrics.tsv");
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.stage == 0);
}
