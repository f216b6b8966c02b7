#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "asd/eval.hpp"
#include "asd/losses.hpp"
#include "asd/model.hpp"
#include "asd/poison.hpp"
#include "asd/pools.hpp"

namespace asd {

struct TrainerConfig {
  ModelSpec model;
  StageSchedule schedule;
  SplitConfig split;
  MixMatchConfig mixmatch;
  double learning_rate = 0.002;  // semi-supervised Adam
  std::uint64_t seed = 1;
};

struct TrainState {
  std::unique_ptr<Net> model;
  std::unique_ptr<nn::Adam<float>> optimizer;
  int epoch = 0;
  Rng train_rng;
  Rng virtual_rng;
};

TrainState make_train_state(const TrainerConfig& cfg);

/// Cycles through an index list in shuffled order, reshuffling on wrap-around.
class BatchCycler {
 public:
  BatchCycler(std::vector<int> indices, Rng& rng);
  /// Up to `count` indices; empty when the underlying list is empty.
  std::vector<int> next(int count);

 private:
  std::vector<int> indices_;
  std::size_t pos_ = 0;
  Rng& rng_;
};

struct EpochStats {
  double mean_total = 0.0;
  double mean_supervised = 0.0;
  double mean_unsupervised = 0.0;
  int iterations = 0;
};

/// One MixMatch epoch: ceil(N/batch) iterations of labeled batches from the
/// clean pool and unlabeled batches from the polluted pool. Polluted-pool
/// labels are never touched.
EpochStats semi_supervised_epoch(TrainState& state, const PoisonedDataset& dataset,
                                 const DataPools& pools, const MixMatchConfig& cfg);

/// One supervised cross-entropy epoch over the given indices with a fresh
/// optimizer stepping only `trainable`. Used for the virtual model. Returns
/// the mean loss across batches. No augmentation: ranking losses must reflect
/// the raw samples.
double virtual_supervised_epoch(VirtualModel& vm, const PoisonedDataset& dataset,
                                const SplitConfig& cfg, Rng& rng);

/// One supervised epoch on the main model over all samples (baseline path),
/// with weak augmentation disabled for protocol parity with the virtual epoch.
double supervised_epoch(TrainState& state, const PoisonedDataset& dataset, int batch_size);

struct EpochReport {
  int epoch = 0;
  int stage = 0;  // 0 for the no-defense baseline
  DataPools pools;
  PerSampleLosses ranking_losses;
  EpochStats stats;
  MetricsRecord metrics;
};

using EpochObserver = std::function<void(const EpochReport&, TrainState&)>;

struct TrainResult {
  std::vector<MetricsRecord> history;
};

/// Full ASD schedule: every epoch rebuilds the pools for its stage (the
/// meta-split stage clones the model and runs the one-epoch virtual update
/// first), then trains one semi-supervised epoch and records metrics.
TrainResult run_asd(TrainState& state, const PoisonedDataset& train, const LabeledDataset& clean_test,
                    const PoisonedDataset& attack_test, int target_label, const SeedSet& seeds,
                    const TrainerConfig& cfg, const EpochObserver& observer = {});

/// Equal-budget supervised baseline (no defense): plain CE training on every
/// sample's assigned label for schedule.t3 epochs.
TrainResult run_supervised(TrainState& state, const PoisonedDataset& train,
                           const LabeledDataset& clean_test, const PoisonedDataset& attack_test,
                           int target_label, const TrainerConfig& cfg,
                           const EpochObserver& observer = {});

}  // namespace asd
