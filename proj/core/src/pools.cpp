#include "asd/pools.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace asd {

void check_pools(const DataPools& pools, std::size_t n) {
  std::vector<char> seen(n, 0);
  auto mark = [&](const std::vector<int>& v) {
    for (int i : v) {
      if (i < 0 || static_cast<std::size_t>(i) >= n) throw std::runtime_error("pool index out of range");
      if (seen[static_cast<std::size_t>(i)]) throw std::runtime_error("pools overlap");
      seen[static_cast<std::size_t>(i)] = 1;
    }
  };
  mark(pools.clean_indices);
  mark(pools.polluted_indices);
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw std::runtime_error("pools do not cover the dataset");
  for (int s : pools.seed_indices)
    if (!std::binary_search(pools.clean_indices.begin(), pools.clean_indices.end(), s))
      throw std::runtime_error("seed sample missing from the clean pool");
}

void validate(const SplitConfig& cfg) {
  if (cfg.seed_per_class < 0) throw std::runtime_error("seed count must be non-negative");
  if (cfg.growth_per_step < 0) throw std::runtime_error("quota growth must be non-negative");
  if (cfg.epochs_per_step < 1) throw std::runtime_error("quota step length must be at least 1");
  if (cfg.alpha_pct < 0.0 || cfg.alpha_pct > 100.0)
    throw std::runtime_error("stage-2 fraction must be in [0,100]");
  if (cfg.gamma_pct < 0.0 || cfg.gamma_pct > 100.0)
    throw std::runtime_error("stage-3 fraction must be in [0,100]");
  if (cfg.virtual_lr <= 0.0) throw std::runtime_error("virtual-model learning rate must be positive");
  if (cfg.virtual_optimizer != "sgd" && cfg.virtual_optimizer != "adam")
    throw std::runtime_error("virtual optimizer must be sgd or adam");
  if (cfg.virtual_batch < 1) throw std::runtime_error("virtual batch size must be at least 1");
}

int StageSchedule::stage_of(int epoch) const {
  if (epoch < 0 || epoch >= t3) throw std::runtime_error("epoch outside the training schedule");
  if (epoch < t1) return 1;
  if (epoch < t2) return 2;
  return 3;
}

void validate(const StageSchedule& schedule) {
  if (schedule.t1 <= 0 || schedule.t1 > schedule.t2 || schedule.t2 > schedule.t3)
    throw std::runtime_error("stage boundaries must satisfy 0 < T1 <= T2 <= T3");
}

namespace {

DataPools pools_from_selection(std::vector<int> clean, std::size_t n, const SeedSet& seeds) {
  DataPools pools;
  pools.seed_indices = seeds.indices;
  for (int s : seeds.indices) clean.push_back(s);
  std::sort(clean.begin(), clean.end());
  clean.erase(std::unique(clean.begin(), clean.end()), clean.end());
  pools.clean_indices = std::move(clean);
  pools.polluted_indices.reserve(n - pools.clean_indices.size());
  std::size_t ci = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ci < pools.clean_indices.size() && pools.clean_indices[ci] == static_cast<int>(i))
      ++ci;
    else
      pools.polluted_indices.push_back(static_cast<int>(i));
  }
  return pools;
}

/// First k candidates ordered by (value, index) ascending.
std::vector<int> lowest_k(const std::vector<double>& values, std::vector<int> candidates,
                          std::size_t k) {
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    const double va = values[static_cast<std::size_t>(a)];
    const double vb = values[static_cast<std::size_t>(b)];
    if (va != vb) return va < vb;
    return a < b;
  });
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

}  // namespace

DataPools init_pools(std::size_t dataset_size, const SeedSet& seeds) {
  return pools_from_selection({}, dataset_size, seeds);
}

int class_aware_quota(int epoch, const SplitConfig& cfg) {
  if (epoch < 0) throw std::runtime_error("epoch must be non-negative");
  return cfg.seed_per_class + cfg.growth_per_step * (epoch / cfg.epochs_per_step);
}

DataPools class_aware_split(const PerSampleLosses& losses, const PoisonedDataset& dataset, int quota,
                            const SeedSet& seeds) {
  if (losses.size() != dataset.size()) throw std::runtime_error("loss vector not aligned to dataset");
  if (quota < 0) throw std::runtime_error("quota must be non-negative");

  std::vector<std::vector<int>> candidates(static_cast<std::size_t>(dataset.class_count));
  for (const auto& s : dataset.samples)
    if (!seeds.contains(s.index))
      candidates[static_cast<std::size_t>(s.assigned_label)].push_back(s.index);

  std::vector<int> selected;
  for (int c = 0; c < dataset.class_count; ++c) {
    auto& pool = candidates[static_cast<std::size_t>(c)];
    if (static_cast<std::size_t>(quota) > pool.size())
      std::fprintf(stderr, "warning: class %d quota %d exceeds its %zu candidates, clamping\n", c,
                   quota, pool.size());
    for (int idx : lowest_k(losses.values, std::move(pool), static_cast<std::size_t>(quota)))
      selected.push_back(idx);
  }
  return pools_from_selection(std::move(selected), dataset.size(), seeds);
}

DataPools class_agnostic_split(const PerSampleLosses& losses, std::size_t dataset_size,
                               double alpha_pct, const SeedSet& seeds) {
  if (losses.size() != dataset_size) throw std::runtime_error("loss vector not aligned to dataset");
  const std::size_t budget =
      static_cast<std::size_t>(std::floor(alpha_pct * static_cast<double>(dataset_size) / 100.0));
  std::vector<int> all(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) all[i] = static_cast<int>(i);
  return pools_from_selection(lowest_k(losses.values, std::move(all), budget), dataset_size, seeds);
}

DataPools meta_split_select(const PerSampleLosses& loss_before, const PerSampleLosses& loss_after,
                            double gamma_pct, const SeedSet& seeds) {
  if (loss_before.size() != loss_after.size())
    throw std::runtime_error("loss-before and loss-after vectors are misaligned");
  const std::size_t n = loss_before.size();
  std::vector<double> reduction(n);
  for (std::size_t i = 0; i < n; ++i) reduction[i] = loss_before.values[i] - loss_after.values[i];
  const std::size_t budget =
      static_cast<std::size_t>(std::floor(gamma_pct * static_cast<double>(n) / 100.0));
  std::vector<int> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
  return pools_from_selection(lowest_k(reduction, std::move(all), budget), n, seeds);
}

DataPools rebuild_pools(int epoch, Net& model, const PoisonedDataset& dataset, const SplitConfig& cfg,
                        const StageSchedule& schedule, const SeedSet& seeds,
                        const std::function<PerSampleLosses(const PerSampleLosses&)>& loss_after_fn,
                        PerSampleLosses* loss_out) {
  validate(cfg);
  validate(schedule);
  const int stage = schedule.stage_of(epoch);
  PerSampleLosses losses = per_sample_losses(model, dataset, LossKind::sce);
  if (loss_out) *loss_out = losses;

  DataPools pools;
  if (stage == 1) {
    pools = class_aware_split(losses, dataset, class_aware_quota(epoch, cfg), seeds);
  } else if (stage == 2) {
    pools = class_agnostic_split(losses, dataset.size(), cfg.alpha_pct, seeds);
  } else {
    if (!loss_after_fn) throw std::runtime_error("meta-split stage needs a loss-after provider");
    const PerSampleLosses after = loss_after_fn(losses);
    pools = meta_split_select(losses, after, cfg.gamma_pct, seeds);
  }
  check_pools(pools, dataset.size());
  return pools;
}

}  // namespace asd
