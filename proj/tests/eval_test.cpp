#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "asd/eval.hpp"
#include "asd/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asd;

namespace {

/// Predicts a fixed class for every sample.
struct ConstantClassifier final : Classifier {
  int label;
  explicit ConstantClassifier(int l) : label(l) {}
  std::vector<int> predict(const std::vector<const Image*>& batch) override {
    return std::vector<int>(batch.size(), label);
  }
};

/// Looks predictions up by image identity (pointer -> class).
struct LookupClassifier final : Classifier {
  std::map<const Image*, int> table;
  std::vector<int> predict(const std::vector<const Image*>& batch) override {
    std::vector<int> out;
    for (const Image* img : batch) out.push_back(table.at(img));
    return out;
  }
};

LabeledDataset small_test(int n, int classes) {
  LabeledDataset d;
  d.class_count = classes;
  for (int i = 0; i < n; ++i) {
    d.images.push_back(make_image(1, 2, 2, static_cast<float>(i)));
    d.labels.push_back(i % classes);
  }
  return d;
}

PoisonedDataset small_attack(int n, int classes, int target) {
  PoisonedDataset d;
  d.class_count = classes;
  for (int i = 0; i < n; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 2, 2, static_cast<float>(i));
    s.ground_truth_label = (target + 1 + i % (classes - 1)) % classes;  // never the target
    s.assigned_label = target;
    s.is_poisoned = true;
    s.index = i;
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace

TEST_CASE("a constant-target classifier scores a perfect attack rate") {
  const PoisonedDataset attack = small_attack(40, 10, 3);
  ConstantClassifier to_target(3);
  CHECK(compute_asr(to_target, attack, 3) == doctest::Approx(1.0));

  ConstantClassifier elsewhere(5);
  CHECK(compute_asr(elsewhere, attack, 3) == doctest::Approx(0.0));
}

TEST_CASE("a ground-truth classifier scores perfect accuracy") {
  const LabeledDataset test = small_test(30, 10);
  LookupClassifier oracle;
  for (std::size_t i = 0; i < test.size(); ++i) oracle.table[&test.images[i]] = test.labels[i];
  CHECK(compute_acc(oracle, test) == doctest::Approx(1.0));

  ConstantClassifier all_zero(0);
  CHECK(compute_acc(all_zero, test) == doctest::Approx(3.0 / 30.0));
}

TEST_CASE("metric counting matches hand-tallied predictions") {
  const LabeledDataset test = small_test(10, 5);
  LookupClassifier clf;
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool hit = i % 3 == 0;
    clf.table[&test.images[i]] = hit ? test.labels[i] : (test.labels[i] + 1) % 5;
    if (hit) ++correct;
  }
  CHECK(compute_acc(clf, test) == doctest::Approx(static_cast<double>(correct) / 10.0));

  const PoisonedDataset attack = small_attack(8, 5, 2);
  LookupClassifier aclf;
  int hits = 0;
  for (std::size_t i = 0; i < attack.size(); ++i) {
    const bool hit = i % 2 == 0;
    aclf.table[&attack.samples[i].image] = hit ? 2 : 0;
    if (hit) ++hits;
  }
  CHECK(compute_asr(aclf, attack, 2) == doctest::Approx(static_cast<double>(hits) / 8.0));
}

TEST_CASE("degenerate metric inputs are rejected") {
  ConstantClassifier clf(0);
  CHECK_THROWS_WITH(compute_acc(clf, LabeledDataset{}), doctest::Contains("empty test set"));
  CHECK_THROWS_WITH(compute_asr(clf, PoisonedDataset{}, 0), doctest::Contains("empty set"));

  PoisonedDataset bad = small_attack(5, 4, 1);
  bad.samples[2].ground_truth_label = 1;  // a target-class sample slipped in
  CHECK_THROWS_WITH(compute_asr(clf, bad, 1), doctest::Contains("target-class sample"));
}

TEST_CASE("split purity counts poisoned samples inside the clean pool") {
  PoisonedDataset data;
  data.class_count = 2;
  for (int i = 0; i < 10; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 1, 1);
    s.assigned_label = 0;
    s.ground_truth_label = 0;
    s.is_poisoned = i >= 7;  // indices 7, 8, 9
    s.index = i;
    data.samples.push_back(std::move(s));
  }

  DataPools pools;
  pools.clean_indices = {0, 1, 2, 7, 8};
  pools.polluted_indices = {3, 4, 5, 6, 9};
  const PurityResult r = split_purity(pools, data);
  CHECK(r.poisoned_in_clean == 2);
  CHECK(r.purity == doctest::Approx(0.4));

  const PurityResult empty = split_purity(DataPools{}, data);
  CHECK(empty.poisoned_in_clean == 0);
  CHECK(empty.purity == 0.0);
}

TEST_CASE("metrics rows round-trip exactly through the file") {
  asd::test::TempDir tmp;
  const std::string path = tmp.file("metrics.tsv");

  std::vector<MetricsRecord> rows;
  Rng rng = make_stream(91, "metrics");
  for (int e = 0; e < 5; ++e) {
    MetricsRecord r;
    r.epoch = e;
    r.stage = 1 + e % 3;
    r.acc = uniform01(rng);
    r.asr = uniform01(rng) * 1e-3;
    r.pool_clean_size = 100 + static_cast<std::uint64_t>(e);
    r.poisoned_in_clean_pool = static_cast<std::uint64_t>(e);
    r.split_purity = uniform01(rng) * 0.02;
    r.wall_time_s = uniform01(rng) * 100.0;
    rows.push_back(r);
    append_metrics(path, r);
  }

  const std::vector<MetricsRecord> got = read_metrics(path);
  REQUIRE(got.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(got[i].epoch == rows[i].epoch);
    CHECK(got[i].stage == rows[i].stage);
    CHECK(got[i].acc == rows[i].acc);  // %.17g writes doubles exactly
    CHECK(got[i].asr == rows[i].asr);
    CHECK(got[i].pool_clean_size == rows[i].pool_clean_size);
    CHECK(got[i].poisoned_in_clean_pool == rows[i].poisoned_in_clean_pool);
    CHECK(got[i].split_purity == rows[i].split_purity);
    CHECK(got[i].wall_time_s == rows[i].wall_time_s);
  }

  CHECK_THROWS_WITH(read_metrics(tmp.file("absent.tsv")), doctest::Contains("cannot open"));

  // a foreign header is rejected
  const std::string alien = tmp.file("alien.tsv");
  {
    std::ofstream out(alien);
    out << "epoch\tacc\n0\t1.0\n";
  }
  CHECK_THROWS_WITH(read_metrics(alien), doctest::Contains("unrecognized metrics header"));
}

TEST_CASE("loss distributions dump one aligned row per sample") {
  asd::test::TempDir tmp;
  const std::string path = tmp.file("losses.tsv");

  PoisonedDataset data;
  data.class_count = 2;
  PerSampleLosses losses;
  losses.kind = LossKind::sce;
  Rng rng = make_stream(92, "loss-dump");
  for (int i = 0; i < 12; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 1, 1);
    s.assigned_label = i % 2;
    s.ground_truth_label = i % 2;
    s.is_poisoned = i % 4 == 1;
    s.index = i;
    data.samples.push_back(std::move(s));
    losses.values.push_back(uniform01(rng) * 10.0);
  }

  export_loss_distribution(path, losses, data, 3);
  export_loss_distribution(path, losses, data, 4);  // appends a second epoch

  const std::vector<LossDumpRow> got = read_loss_distribution(path);
  REQUIRE(got.size() == 24);
  for (int e = 0; e < 2; ++e)
    for (int i = 0; i < 12; ++i) {
      const LossDumpRow& row = got[static_cast<std::size_t>(e * 12 + i)];
      CHECK(row.epoch == 3 + e);
      CHECK(row.index == i);
      CHECK(row.is_poisoned == (i % 4 == 1));
      CHECK(row.loss == losses.values[static_cast<std::size_t>(i)]);
      CHECK(row.kind == "sce");
    }

  PerSampleLosses misaligned;
  misaligned.values.assign(3, 0.0);
  CHECK_THROWS_WITH(export_loss_distribution(path, misaligned, data, 5),
                    doctest::Contains("not aligned"));
}

TEST_CASE("pool snapshots record every sample's pool and poison flag") {
  asd::test::TempDir tmp;
  const std::string path = tmp.file("pools.tsv");

  PoisonedDataset data;
  data.class_count = 2;
  for (int i = 0; i < 8; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 1, 1);
    s.assigned_label = i % 2;
    s.ground_truth_label = i % 2;
    s.is_poisoned = i == 5;
    s.index = i;
    data.samples.push_back(std::move(s));
  }
  DataPools pools;
  pools.clean_indices = {0, 2, 4, 6};
  pools.polluted_indices = {1, 3, 5, 7};

  export_pool_snapshot(path, 0, pools, data);
  export_pool_snapshot(path, 1, pools, data);

  const std::vector<PoolSnapshotRow> got = read_pool_snapshot(path);
  REQUIRE(got.size() == 16);
  std::size_t clean_rows = 0;
  for (const auto& row : got) {
    CHECK((row.pool == 'C' || row.pool == 'P'));
    CHECK((row.epoch == 0 || row.epoch == 1));
    if (row.pool == 'C') {
      ++clean_rows;
      CHECK(row.index % 2 == 0);
    } else {
      CHECK(row.index % 2 == 1);
    }
    CHECK(row.is_poisoned == (row.index == 5));
  }
  CHECK(clean_rows == 8);

  CHECK_THROWS_WITH(read_pool_snapshot(tmp.file("none.tsv")), doctest::Contains("cannot open"));
}
