#include "asd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace asd {

std::vector<int> NetClassifier::predict(const std::vector<const Image*>& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (std::size_t start = 0; start < batch.size(); start += static_cast<std::size_t>(batch_)) {
    const std::size_t stop = std::min(batch.size(), start + static_cast<std::size_t>(batch_));
    std::vector<const Image*> chunk(batch.begin() + static_cast<std::ptrdiff_t>(start),
                                    batch.begin() + static_cast<std::ptrdiff_t>(stop));
    const nn::Mat<float> logits = net_.forward(assemble_input(chunk), false);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      Eigen::Index best = 0;
      logits.col(j).maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

double compute_acc(Classifier& clf, const LabeledDataset& test) {
  if (test.size() == 0) throw std::runtime_error("accuracy over an empty test set");
  std::vector<const Image*> imgs;
  imgs.reserve(test.size());
  for (const auto& img : test.images) imgs.push_back(&img);
  const std::vector<int> pred = clf.predict(imgs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (pred[i] == test.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double compute_asr(Classifier& clf, const PoisonedDataset& triggered, int target_label) {
  if (triggered.size() == 0) throw std::runtime_error("attack success rate over an empty set");
  std::vector<const Image*> imgs;
  imgs.reserve(triggered.size());
  for (const auto& s : triggered.samples) {
    if (s.ground_truth_label == target_label)
      throw std::runtime_error("attack test set contains a target-class sample");
    imgs.push_back(&s.image);
  }
  const std::vector<int> pred = clf.predict(imgs);
  std::size_t hits = 0;
  for (int p : pred)
    if (p == target_label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(triggered.size());
}

PurityResult split_purity(const DataPools& pools, const PoisonedDataset& dataset) {
  PurityResult r;
  if (pools.clean_indices.empty()) return r;
  for (int i : pools.clean_indices)
    if (dataset.samples[static_cast<std::size_t>(i)].is_poisoned) ++r.poisoned_in_clean;
  r.purity = static_cast<double>(r.poisoned_in_clean) / static_cast<double>(pools.clean_indices.size());
  return r;
}

const char* const kMetricsHeader =
    "epoch\tstage\tacc\tasr\tpool_clean_size\tpoisoned_in_clean_pool\tsplit_purity\twall_time_s";

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool file_is_empty_or_missing(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return true;
  char c;
  return !in.read(&c, 1);
}

}  // namespace

void append_metrics(const std::string& path, const MetricsRecord& r) {
  const bool fresh = file_is_empty_or_missing(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open metrics file: " + path);
  if (fresh) out << kMetricsHeader << "\n";
  out << r.epoch << "\t" << r.stage << "\t" << fmt_double(r.acc) << "\t" << fmt_double(r.asr) << "\t"
      << r.pool_clean_size << "\t" << r.poisoned_in_clean_pool << "\t" << fmt_double(r.split_purity)
      << "\t" << fmt_double(r.wall_time_s) << "\n";
  if (!out) throw std::runtime_error("short write to metrics file: " + path);
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::string header;
  if (!std::getline(in, header) || header != kMetricsHeader)
    throw std::runtime_error("unrecognized metrics header in " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricsRecord r;
    ls >> r.epoch >> r.stage >> r.acc >> r.asr >> r.pool_clean_size >> r.poisoned_in_clean_pool >>
        r.split_purity >> r.wall_time_s;
    if (!ls) throw std::runtime_error("malformed metrics row in " + path);
    out.push_back(r);
  }
  return out;
}

void export_loss_distribution(const std::string& path, const PerSampleLosses& losses,
                              const PoisonedDataset& dataset, int epoch) {
  if (losses.size() != dataset.size()) throw std::runtime_error("loss vector not aligned to dataset");
  const bool fresh = file_is_empty_or_missing(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open loss dump: " + path);
  if (fresh) out << "index\tis_poisoned\tloss\tloss_kind\tepoch\n";
  const std::string kind = loss_kind_name(losses.kind);
  for (std::size_t i = 0; i < losses.size(); ++i)
    out << dataset.samples[i].index << "\t" << (dataset.samples[i].is_poisoned ? 1 : 0) << "\t"
        << fmt_double(losses.values[i]) << "\t" << kind << "\t" << epoch << "\n";
  if (!out) throw std::runtime_error("short write to loss dump: " + path);
}

std::vector<LossDumpRow> read_loss_distribution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open loss dump: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "index\tis_poisoned\tloss\tloss_kind\tepoch")
    throw std::runtime_error("unrecognized loss dump header in " + path);
  std::vector<LossDumpRow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    LossDumpRow r;
    int pois = 0;
    ls >> r.index >> pois >> r.loss >> r.kind >> r.epoch;
    if (!ls) throw std::runtime_error("malformed loss dump row in " + path);
    r.is_poisoned = pois != 0;
    out.push_back(std::move(r));
  }
  return out;
}

void export_pool_snapshot(const std::string& path, int epoch, const DataPools& pools,
                          const PoisonedDataset& dataset) {
  const bool fresh = file_is_empty_or_missing(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open pool snapshot: " + path);
  if (fresh) out << "epoch\tindex\tpool\tis_poisoned\n";
  auto emit = [&](const std::vector<int>& indices, char tag) {
    for (int i : indices)
      out << epoch << "\t" << i << "\t" << tag << "\t"
          << (dataset.samples[static_cast<std::size_t>(i)].is_poisoned ? 1 : 0) << "\n";
  };
  emit(pools.clean_indices, 'C');
  emit(pools.polluted_indices, 'P');
  if (!out) throw std::runtime_error("short write to pool snapshot: " + path);
}

std::vector<PoolSnapshotRow> read_pool_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pool snapshot: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "epoch\tindex\tpool\tis_poisoned")
    throw std::runtime_error("unrecognized pool snapshot header in " + path);
  std::vector<PoolSnapshotRow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    PoolSnapshotRow r;
    int pois = 0;
    ls >> r.epoch >> r.index >> r.pool >> pois;
    if (!ls) throw std::runtime_error("malformed pool snapshot row in " + path);
    r.is_poisoned = pois != 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace asd
