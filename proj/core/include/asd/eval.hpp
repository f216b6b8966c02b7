#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asd/losses.hpp"
#include "asd/model.hpp"
#include "asd/poison.hpp"
#include "asd/pools.hpp"

namespace asd {

/// Anything that maps images to predicted classes. Lets metric code run
/// against stub predictors in tests and real networks in production.
struct Classifier {
  virtual ~Classifier() = default;
  virtual std::vector<int> predict(const std::vector<const Image*>& batch) = 0;
};

/// Argmax over network logits, eval mode, batched internally.
class NetClassifier final : public Classifier {
 public:
  explicit NetClassifier(Net& net, int batch_size = 256) : net_(net), batch_(batch_size) {}
  std::vector<int> predict(const std::vector<const Image*>& batch) override;

 private:
  Net& net_;
  int batch_;
};

/// Fraction of test samples classified to their ground-truth label.
double compute_acc(Classifier& clf, const LabeledDataset& test);

/// Fraction of triggered samples classified to the attack target. Every
/// sample must come from a non-target ground-truth class.
double compute_asr(Classifier& clf, const PoisonedDataset& triggered, int target_label);

struct PurityResult {
  double purity = 0.0;  // |poisoned ∩ D_C| / |D_C|, 0 for an empty pool
  std::uint64_t poisoned_in_clean = 0;
};

PurityResult split_purity(const DataPools& pools, const PoisonedDataset& dataset);

struct MetricsRecord {
  int epoch = 0;
  int stage = 0;
  double acc = 0.0;
  double asr = 0.0;
  std::uint64_t pool_clean_size = 0;
  std::uint64_t poisoned_in_clean_pool = 0;
  double split_purity = 0.0;
  double wall_time_s = 0.0;
};

/// Tab-separated, fixed header, append-only; numbers round-trip exactly.
extern const char* const kMetricsHeader;
void append_metrics(const std::string& path, const MetricsRecord& record);
std::vector<MetricsRecord> read_metrics(const std::string& path);

/// Loss-distribution dump rows: index, is_poisoned, loss, kind, epoch.
void export_loss_distribution(const std::string& path, const PerSampleLosses& losses,
                              const PoisonedDataset& dataset, int epoch);

struct LossDumpRow {
  int index = 0;
  bool is_poisoned = false;
  double loss = 0.0;
  std::string kind;
  int epoch = 0;
};

std::vector<LossDumpRow> read_loss_distribution(const std::string& path);

/// Pool snapshot rows: epoch, index, pool (C|P), is_poisoned. Appends.
void export_pool_snapshot(const std::string& path, int epoch, const DataPools& pools,
                          const PoisonedDataset& dataset);

struct PoolSnapshotRow {
  int epoch = 0;
  int index = 0;
  char pool = 'C';
  bool is_poisoned = false;
};

std::vector<PoolSnapshotRow> read_pool_snapshot(const std::string& path);

}  // namespace asd
