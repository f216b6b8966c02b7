#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include "asd/pools.hpp"
#include "asd/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asd;

namespace {

/// Reference selection: candidates ordered by (value, index) ascending, first k.
std::vector<int> brute_lowest(const std::vector<double>& vals, std::vector<int> cand, std::size_t k) {
  std::sort(cand.begin(), cand.end(), [&](int a, int b) {
    const double va = vals[static_cast<std::size_t>(a)], vb = vals[static_cast<std::size_t>(b)];
    if (va != vb) return va < vb;
    return a < b;
  });
  if (cand.size() > k) cand.resize(k);
  return cand;
}

/// Reference pool assembly: clean = sorted union of selection and seeds.
DataPools brute_pools(const std::vector<int>& selected, std::size_t n, const SeedSet& seeds) {
  std::set<int> clean(selected.begin(), selected.end());
  clean.insert(seeds.indices.begin(), seeds.indices.end());
  DataPools out;
  out.seed_indices = seeds.indices;
  out.clean_indices.assign(clean.begin(), clean.end());
  for (std::size_t i = 0; i < n; ++i)
    if (!clean.count(static_cast<int>(i))) out.polluted_indices.push_back(static_cast<int>(i));
  return out;
}

bool same_pools(const DataPools& a, const DataPools& b) {
  return a.clean_indices == b.clean_indices && a.polluted_indices == b.polluted_indices &&
         a.seed_indices == b.seed_indices;
}

PoisonedDataset plain_dataset(int n, int class_count, const std::vector<int>& labels) {
  PoisonedDataset data;
  data.class_count = class_count;
  for (int i = 0; i < n; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 2, 2, static_cast<float>(i) / static_cast<float>(n));
    s.assigned_label = labels[static_cast<std::size_t>(i)];
    s.ground_truth_label = s.assigned_label;
    s.index = i;
    data.samples.push_back(std::move(s));
  }
  return data;
}

SeedSet random_seeds(Rng& rng, int n, int count) {
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  fisher_yates_shuffle(all, rng);
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return SeedSet{all, 0};
}

}  // namespace

TEST_CASE("stage schedule maps epochs to stages at the documented boundaries") {
  const StageSchedule s{60, 90, 120};
  CHECK(s.stage_of(0) == 1);
  CHECK(s.stage_of(59) == 1);
  CHECK(s.stage_of(60) == 2);
  CHECK(s.stage_of(89) == 2);
  CHECK(s.stage_of(90) == 3);
  CHECK(s.stage_of(119) == 3);
  CHECK_THROWS_WITH(s.stage_of(-1), doctest::Contains("outside the training schedule"));
  CHECK_THROWS(s.stage_of(120));

  CHECK_NOTHROW(validate(StageSchedule{1, 1, 1}));
  CHECK_THROWS_WITH(validate(StageSchedule{0, 1, 2}), doctest::Contains("0 < T1"));
  CHECK_THROWS(validate(StageSchedule{5, 4, 6}));
  CHECK_THROWS(validate(StageSchedule{2, 5, 4}));
}

TEST_CASE("split configuration validation rejects out-of-range settings") {
  SplitConfig ok;
  CHECK_NOTHROW(validate(ok));

  SplitConfig bad = ok;
  bad.alpha_pct = 150.0;
  CHECK_THROWS_WITH(validate(bad), doctest::Contains("stage-2 fraction"));
  bad = ok;
  bad.gamma_pct = -1.0;
  CHECK_THROWS_WITH(validate(bad), doctest::Contains("stage-3 fraction"));
  bad = ok;
  bad.virtual_optimizer = "rmsprop";
  CHECK_THROWS_WITH(validate(bad), doctest::Contains("sgd or adam"));
  bad = ok;
  bad.virtual_batch = 0;
  CHECK_THROWS(validate(bad));
  bad = ok;
  bad.seed_per_class = -1;
  CHECK_THROWS(validate(bad));
  bad = ok;
  bad.epochs_per_step = 0;
  CHECK_THROWS(validate(bad));
  bad = ok;
  bad.virtual_lr = 0.0;
  CHECK_THROWS(validate(bad));
}

TEST_CASE("clean-pool quota grows stepwise") {
  SplitConfig cfg;  // w=10, n=10, t=5
  CHECK(class_aware_quota(0, cfg) == 10);
  CHECK(class_aware_quota(4, cfg) == 10);
  CHECK(class_aware_quota(5, cfg) == 20);
  CHECK(class_aware_quota(12, cfg) == 30);
  CHECK(class_aware_quota(59, cfg) == 120);
  CHECK_THROWS_WITH(class_aware_quota(-1, cfg), doctest::Contains("non-negative"));

  SplitConfig other;
  other.seed_per_class = 3;
  other.growth_per_step = 7;
  other.epochs_per_step = 2;
  CHECK(class_aware_quota(0, other) == 3);
  CHECK(class_aware_quota(3, other) == 10);
  CHECK(class_aware_quota(8, other) == 31);
}

TEST_CASE("initial pools hold exactly the seed samples") {
  SeedSet seeds{{3, 17, 41}, 1};
  const DataPools pools = init_pools(100, seeds);
  CHECK(pools.clean_indices == std::vector<int>{3, 17, 41});
  CHECK(pools.seed_indices == std::vector<int>{3, 17, 41});
  CHECK(pools.polluted_indices.size() == 97);
  CHECK_NOTHROW(check_pools(pools, 100));
}

TEST_CASE("pool invariant checking catches broken partitions") {
  DataPools good{{0, 1}, {2, 3}, {0}};
  CHECK_NOTHROW(check_pools(good, 4));

  CHECK_THROWS_WITH(check_pools(DataPools{{0, 1}, {1, 2, 3}, {}}, 4), doctest::Contains("overlap"));
  CHECK_THROWS_WITH(check_pools(DataPools{{0}, {2, 3}, {}}, 4), doctest::Contains("cover"));
  CHECK_THROWS_WITH(check_pools(DataPools{{0, 5}, {1, 2, 3}, {}}, 4), doctest::Contains("out of range"));
  CHECK_THROWS_WITH(check_pools(DataPools{{0, 1}, {2, 3}, {2}}, 4),
                    doctest::Contains("seed sample missing"));
}

TEST_CASE("splits agree with brute-force sorting across random trials") {
  Rng rng = make_stream(71, "split-trials");
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 10 + static_cast<int>(uniform_below(rng, 51));
    const int classes = 2 + static_cast<int>(uniform_below(rng, 4));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(classes)));
    const PoisonedDataset data = plain_dataset(n, classes, labels);
    const SeedSet seeds = random_seeds(rng, n, static_cast<int>(uniform_below(rng, 5)));

    // half the draws come from a tiny discrete set so ties are common
    PerSampleLosses before, after;
    before.values.resize(static_cast<std::size_t>(n));
    after.values.resize(static_cast<std::size_t>(n));
    for (auto& v : before.values)
      v = uniform01(rng) < 0.5 ? 0.25 * static_cast<double>(uniform_below(rng, 4)) : uniform01(rng);
    for (auto& v : after.values)
      v = uniform01(rng) < 0.5 ? 0.25 * static_cast<double>(uniform_below(rng, 4)) : uniform01(rng);

    const int quota = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    const DataPools aware = class_aware_split(before, data, quota, seeds);
    {
      std::vector<int> expect;
      for (int c = 0; c < classes; ++c) {
        std::vector<int> cand;
        for (int i = 0; i < n; ++i)
          if (labels[static_cast<std::size_t>(i)] == c && !seeds.contains(i)) cand.push_back(i);
        for (int idx : brute_lowest(before.values, cand, static_cast<std::size_t>(quota)))
          expect.push_back(idx);
      }
      REQUIRE(same_pools(aware, brute_pools(expect, static_cast<std::size_t>(n), seeds)));
    }

    const double pcts[4] = {0.0, 13.7, 50.0, 100.0};
    const double alpha = pcts[uniform_below(rng, 4)];
    const DataPools agnostic = class_agnostic_split(before, static_cast<std::size_t>(n), alpha, seeds);
    {
      std::vector<int> all(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      const auto budget = static_cast<std::size_t>(std::floor(alpha * n / 100.0));
      REQUIRE(same_pools(agnostic,
                         brute_pools(brute_lowest(before.values, all, budget),
                                     static_cast<std::size_t>(n), seeds)));
    }

    const double gamma = pcts[uniform_below(rng, 4)];
    const DataPools meta = meta_split_select(before, after, gamma, seeds);
    {
      std::vector<double> reduction(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        reduction[static_cast<std::size_t>(i)] =
            before.values[static_cast<std::size_t>(i)] - after.values[static_cast<std::size_t>(i)];
      std::vector<int> all(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      const auto budget = static_cast<std::size_t>(std::floor(gamma * n / 100.0));
      REQUIRE(same_pools(meta, brute_pools(brute_lowest(reduction, all, budget),
                                           static_cast<std::size_t>(n), seeds)));
    }

    // structural invariants hold on every trial
    for (const DataPools* p : {&aware, &agnostic, &meta}) {
      REQUIRE_NOTHROW(check_pools(*p, static_cast<std::size_t>(n)));
      REQUIRE(std::is_sorted(p->clean_indices.begin(), p->clean_indices.end()));
      REQUIRE(std::is_sorted(p->polluted_indices.begin(), p->polluted_indices.end()));
      REQUIRE(p->clean_indices.size() + p->polluted_indices.size() == static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("oversized per-class quotas clamp to the class size") {
  const int n = 12;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const PoisonedDataset data = plain_dataset(n, 3, labels);
  PerSampleLosses losses;
  losses.values.assign(static_cast<std::size_t>(n), 0.5);

  const DataPools pools = class_aware_split(losses, data, 100, SeedSet{{}, 0});
  CHECK(pools.clean_indices.size() == static_cast<std::size_t>(n));
  CHECK(pools.polluted_indices.empty());

  PerSampleLosses misaligned;
  misaligned.values.assign(5, 0.1);
  CHECK_THROWS_WITH(class_aware_split(misaligned, data, 2, SeedSet{{}, 0}),
                    doctest::Contains("not aligned"));
  CHECK_THROWS(class_aware_split(losses, data, -1, SeedSet{{}, 0}));
}

TEST_CASE("misaligned meta-split inputs are rejected") {
  PerSampleLosses a, b;
  a.values.assign(4, 0.0);
  b.values.assign(5, 0.0);
  CHECK_THROWS_WITH(meta_split_select(a, b, 50.0, SeedSet{{}, 0}), doctest::Contains("misaligned"));
}

TEST_CASE("per-epoch rebuild dispatches to the stage splits") {
  Rng rng = make_stream(72, "rebuild");
  const int n = 30, classes = 3;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
  PoisonedDataset data = plain_dataset(n, classes, labels);
  for (auto& s : data.samples)
    for (auto& v : s.image.data) v = static_cast<float>(uniform01(rng));

  auto root = std::make_unique<nn::Sequential<float>>();
  auto conv = std::make_unique<nn::Conv2d<float>>("c", 1, 2, 3, 1, 1, 2, 2);
  conv->init_he(rng);
  root->add(std::move(conv));
  root->add(std::make_unique<nn::GlobalAvgPool<float>>(2, 2, 2));
  auto fc = std::make_unique<nn::Dense<float>>("fc", 2, classes);
  fc->init_he(rng);
  root->add(std::move(fc));
  Net net(std::move(root), 1, 2, 2, classes);

  SplitConfig cfg;
  cfg.seed_per_class = 1;
  const StageSchedule schedule{2, 4, 6};
  const SeedSet seeds{{0, 1, 2}, 1};
  const PerSampleLosses ranking = per_sample_losses(net, data, LossKind::sce);

  PerSampleLosses used;
  const DataPools stage1 = rebuild_pools(0, net, data, cfg, schedule, seeds, nullptr, &used);
  CHECK(same_pools(stage1, class_aware_split(ranking, data, class_aware_quota(0, cfg), seeds)));
  CHECK(used.kind == LossKind::sce);
  REQUIRE(used.values.size() == ranking.values.size());
  for (std::size_t i = 0; i < used.values.size(); ++i)
    CHECK(used.values[i] == doctest::Approx(ranking.values[i]).epsilon(1e-9));

  const DataPools stage2 = rebuild_pools(2, net, data, cfg, schedule, seeds, nullptr);
  CHECK(same_pools(stage2, class_agnostic_split(ranking, data.size(), cfg.alpha_pct, seeds)));

  // halved losses: reduction ranks like the raw losses
  auto halve = [](const PerSampleLosses& before) {
    PerSampleLosses after = before;
    for (auto& v : after.values) v *= 0.5;
    return after;
  };
  const DataPools stage3 = rebuild_pools(4, net, data, cfg, schedule, seeds, halve);
  CHECK(same_pools(stage3, meta_split_select(ranking, halve(ranking), cfg.gamma_pct, seeds)));

  CHECK_THROWS_WITH(rebuild_pools(4, net, data, cfg, schedule, seeds, nullptr),
                    doctest::Contains("loss-after provider"));
}
