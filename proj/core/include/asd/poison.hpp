#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asd/dataset.hpp"

namespace asd {

enum class TriggerKind { none, badnets_patch, blend };

std::string trigger_kind_name(TriggerKind kind);
TriggerKind trigger_kind_from_name(const std::string& name);

struct TriggerSpec {
  TriggerKind kind = TriggerKind::none;

  // badnets_patch: pixels stamped over the image at (anchor_row, anchor_col).
  Image patch;
  int anchor_row = 0;
  int anchor_col = 0;

  // blend: output = (1-ratio)*image + ratio*pattern, clamped to [0,1].
  Image blend_pattern;
  double blend_ratio = 0.0;
};

/// Solid square patch, all channels set to `value`.
TriggerSpec make_badnets_patch(int side, int channels, float value, int anchor_row, int anchor_col);

/// Fixed uniform-noise pattern for the blend attack, deterministic in the seed.
TriggerSpec make_blend_trigger(int channels, int height, int width, double ratio, std::uint64_t seed);

struct PoisonPolicy {
  int target_label = 3;
  double poison_rate = 0.05;
  std::uint64_t rng_seed = 0;
};

struct PoisonedSample {
  Image image;
  int assigned_label = 0;
  int ground_truth_label = 0;
  bool is_poisoned = false;
  int index = 0;
};

struct PoisonedDataset {
  std::vector<PoisonedSample> samples;
  int class_count = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t poison_count() const;
};

struct SeedSet {
  std::vector<int> indices;  // ascending
  int per_class = 0;

  bool contains(int index) const;
};

Image inject_badnets_trigger(const Image& image, const TriggerSpec& spec);
Image inject_blend_trigger(const Image& image, const TriggerSpec& spec);

/// Dispatch on spec.kind; TriggerKind::none returns the image unchanged.
Image inject_trigger(const Image& image, const TriggerSpec& spec);

/// Poison floor(rate*N) uniformly chosen samples: trigger injected, label
/// rewritten to the target. Remaining samples are copied bit-identically.
PoisonedDataset build_poisoned_dataset(const LabeledDataset& clean, const PoisonPolicy& policy,
                                       const TriggerSpec& spec);

/// Wrap a dataset without poisoning anything (clean-training baseline).
PoisonedDataset wrap_clean_dataset(const LabeledDataset& clean);

/// Attack test set: every test image whose ground-truth class differs from the
/// target gets the trigger; assigned_label is the attack target.
PoisonedDataset build_attack_test_set(const LabeledDataset& test, const PoisonPolicy& policy,
                                      const TriggerSpec& spec);

/// w known-clean samples per ground-truth class, deterministic in the seed.
SeedSet draw_seed_samples(const PoisonedDataset& dataset, int w, std::uint64_t rng_seed);

/// On-disk dataset artifact: manifest.txt + images.bin (+ pattern.bin for blend).
struct DatasetArtifact {
  PoisonedDataset data;
  PoisonPolicy policy;
  TriggerSpec trigger;
};

void save_dataset_artifact(const DatasetArtifact& artifact, const std::string& dir);
DatasetArtifact load_dataset_artifact(const std::string& dir);

}  // namespace asd
