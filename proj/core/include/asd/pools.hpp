#pragma once

#include <functional>
#include <vector>

#include "asd/losses.hpp"
#include "asd/model.hpp"
#include "asd/poison.hpp"

namespace asd {

/// The two training pools. Clean-pool samples keep their labels; polluted-pool
/// samples are used unlabeled.
struct DataPools {
  std::vector<int> clean_indices;     // D_C, ascending
  std::vector<int> polluted_indices;  // D_P, ascending
  std::vector<int> seed_indices;      // pinned subset of D_C, ascending
};

/// Throws unless the pools partition [0,n) and seeds are inside the clean pool.
void check_pools(const DataPools& pools, std::size_t n);

struct SplitConfig {
  int seed_per_class = 10;   // w
  int growth_per_step = 10;  // n
  int epochs_per_step = 5;   // t
  double alpha_pct = 50.0;   // stage-2 fraction
  double gamma_pct = 50.0;   // stage-3 fraction
  double virtual_lr = 0.015;             // beta
  std::string virtual_optimizer = "sgd";  // sgd | adam
  int virtual_batch = 128;
  ParameterPartition partition;
};

void validate(const SplitConfig& cfg);

struct StageSchedule {
  int t1 = 60;
  int t2 = 90;
  int t3 = 120;

  /// 1, 2 or 3 for epoch in [0, t3); throws outside.
  int stage_of(int epoch) const;
};

// t1 <= t2 <= t3 (not strict: a degenerate one-epoch schedule is legal).
void validate(const StageSchedule& schedule);

DataPools init_pools(std::size_t dataset_size, const SeedSet& seeds);

/// Per-class clean-pool quota during stage 1: w + n * floor(epoch / t).
int class_aware_quota(int epoch, const SplitConfig& cfg);

/// Stage 1: per assigned-label class, the quota lowest-loss non-seed samples
/// join the seeds in D_C. Ties break by ascending index. Oversized quotas
/// clamp to the class size with a warning.
DataPools class_aware_split(const PerSampleLosses& losses, const PoisonedDataset& dataset, int quota,
                            const SeedSet& seeds);

/// Stage 2: the floor(alpha_pct*N/100) lowest-loss samples over the whole
/// dataset, plus pinned seeds on top.
DataPools class_agnostic_split(const PerSampleLosses& losses, std::size_t dataset_size,
                               double alpha_pct, const SeedSet& seeds);

/// Stage 3: rank by loss reduction before - after; the floor(gamma_pct*N/100)
/// samples with the smallest reduction enter D_C, plus pinned seeds.
DataPools meta_split_select(const PerSampleLosses& loss_before, const PerSampleLosses& loss_after,
                            double gamma_pct, const SeedSet& seeds);

/// Per-epoch dispatch. Computes fresh inference-mode ranking losses from the
/// model, then applies the stage's split. In stage 3, loss_after_fn must
/// return the ranking losses of the one-epoch virtual model (the trainer owns
/// that procedure). loss_out, when given, receives the ranking losses used.
DataPools rebuild_pools(int epoch, Net& model, const PoisonedDataset& dataset, const SplitConfig& cfg,
                        const StageSchedule& schedule, const SeedSet& seeds,
                        const std::function<PerSampleLosses(const PerSampleLosses&)>& loss_after_fn,
                        PerSampleLosses* loss_out = nullptr);

}  // namespace asd
