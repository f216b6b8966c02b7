#include "asd/poison.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "asd/rng.hpp"

namespace asd {

std::string trigger_kind_name(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::none: return "none";
    case TriggerKind::badnets_patch: return "badnets-patch";
    case TriggerKind::blend: return "blend";
  }
  throw std::runtime_error("unknown trigger kind");
}

TriggerKind trigger_kind_from_name(const std::string& name) {
  if (name == "none") return TriggerKind::none;
  if (name == "badnets-patch") return TriggerKind::badnets_patch;
  if (name == "blend") return TriggerKind::blend;
  throw std::runtime_error("unknown trigger kind: " + name);
}

TriggerSpec make_badnets_patch(int side, int channels, float value, int anchor_row, int anchor_col) {
  TriggerSpec spec;
  spec.kind = TriggerKind::badnets_patch;
  spec.patch = make_image(channels, side, side, value);
  spec.anchor_row = anchor_row;
  spec.anchor_col = anchor_col;
  return spec;
}

TriggerSpec make_blend_trigger(int channels, int height, int width, double ratio, std::uint64_t seed) {
  TriggerSpec spec;
  spec.kind = TriggerKind::blend;
  spec.blend_ratio = ratio;
  spec.blend_pattern = make_image(channels, height, width);
  Rng rng = make_stream(seed, "blend-pattern");
  for (auto& v : spec.blend_pattern.data) v = static_cast<float>(uniform01(rng));
  return spec;
}

std::size_t PoisonedDataset::poison_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.is_poisoned ? 1u : 0u;
  return n;
}

bool SeedSet::contains(int index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

Image inject_badnets_trigger(const Image& image, const TriggerSpec& spec) {
  if (spec.kind != TriggerKind::badnets_patch)
    throw std::runtime_error("inject_badnets_trigger called with non-patch trigger");
  const Image& p = spec.patch;
  if (p.height == 0 || p.width == 0) return image;
  if (p.channels != image.channels)
    throw std::runtime_error("patch channel count does not match image");
  if (spec.anchor_row < 0 || spec.anchor_col < 0 || spec.anchor_row + p.height > image.height ||
      spec.anchor_col + p.width > image.width) {
    std::ostringstream msg;
    msg << "patch out of bounds: anchor (" << spec.anchor_row << "," << spec.anchor_col << "), patch "
        << p.height << "x" << p.width << ", image " << image.height << "x" << image.width;
    throw std::runtime_error(msg.str());
  }
  Image out = image;
  for (int c = 0; c < p.channels; ++c)
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        out.at(c, spec.anchor_row + y, spec.anchor_col + x) = p.at(c, y, x);
  return out;
}

Image inject_blend_trigger(const Image& image, const TriggerSpec& spec) {
  if (spec.kind != TriggerKind::blend)
    throw std::runtime_error("inject_blend_trigger called with non-blend trigger");
  if (!spec.blend_pattern.same_shape(image))
    throw std::runtime_error("blend pattern shape does not match image");
  if (spec.blend_ratio < 0.0 || spec.blend_ratio > 1.0)
    throw std::runtime_error("blend ratio must be in [0,1]");
  const float k = static_cast<float>(spec.blend_ratio);
  Image out = image;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float v = (1.0f - k) * image.data[i] + k * spec.blend_pattern.data[i];
    out.data[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

Image inject_trigger(const Image& image, const TriggerSpec& spec) {
  switch (spec.kind) {
    case TriggerKind::none: return image;
    case TriggerKind::badnets_patch: return inject_badnets_trigger(image, spec);
    case TriggerKind::blend: return inject_blend_trigger(image, spec);
  }
  throw std::runtime_error("unknown trigger kind");
}

PoisonedDataset build_poisoned_dataset(const LabeledDataset& clean, const PoisonPolicy& policy,
                                       const TriggerSpec& spec) {
  if (policy.poison_rate < 0.0 || policy.poison_rate > 1.0)
    throw std::runtime_error("poison rate must be in [0,1]");
  if (policy.target_label < 0 || policy.target_label >= clean.class_count)
    throw std::runtime_error("target label outside class range");

  const std::size_t n = clean.size();
  const std::size_t k = static_cast<std::size_t>(std::floor(policy.poison_rate * static_cast<double>(n)));
  if (policy.poison_rate > 0.0 && k == 0)
    std::fprintf(stderr, "warning: poison rate %g yields zero poisoned samples for N=%zu\n",
                 policy.poison_rate, n);

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng = make_stream(policy.rng_seed, "poison-indices");
  fisher_yates_shuffle(order, rng);
  std::vector<char> poisoned(n, 0);
  for (std::size_t i = 0; i < k; ++i) poisoned[static_cast<std::size_t>(order[i])] = 1;

  PoisonedDataset out;
  out.class_count = clean.class_count;
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PoisonedSample s;
    s.index = static_cast<int>(i);
    s.ground_truth_label = clean.labels[i];
    if (poisoned[i]) {
      s.image = inject_trigger(clean.images[i], spec);
      s.assigned_label = policy.target_label;
      s.is_poisoned = true;
    } else {
      s.image = clean.images[i];
      s.assigned_label = clean.labels[i];
      s.is_poisoned = false;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

PoisonedDataset wrap_clean_dataset(const LabeledDataset& clean) {
  PoisonedDataset out;
  out.class_count = clean.class_count;
  out.samples.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    PoisonedSample s;
    s.index = static_cast<int>(i);
    s.image = clean.images[i];
    s.assigned_label = clean.labels[i];
    s.ground_truth_label = clean.labels[i];
    s.is_poisoned = false;
    out.samples.push_back(std::move(s));
  }
  return out;
}

PoisonedDataset build_attack_test_set(const LabeledDataset& test, const PoisonPolicy& policy,
                                      const TriggerSpec& spec) {
  PoisonedDataset out;
  out.class_count = test.class_count;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == policy.target_label) continue;
    PoisonedSample s;
    s.index = static_cast<int>(i);
    s.image = inject_trigger(test.images[i], spec);
    s.assigned_label = policy.target_label;
    s.ground_truth_label = test.labels[i];
    s.is_poisoned = true;
    out.samples.push_back(std::move(s));
  }
  return out;
}

SeedSet draw_seed_samples(const PoisonedDataset& dataset, int w, std::uint64_t rng_seed) {
  if (w < 0) throw std::runtime_error("seed count per class must be non-negative");
  SeedSet set;
  set.per_class = w;
  if (w == 0) return set;

  std::vector<std::vector<int>> clean_by_class(static_cast<std::size_t>(dataset.class_count));
  for (const auto& s : dataset.samples)
    if (!s.is_poisoned) clean_by_class[static_cast<std::size_t>(s.ground_truth_label)].push_back(s.index);

  Rng rng = make_stream(rng_seed, "seed-samples");
  for (int c = 0; c < dataset.class_count; ++c) {
    auto& bucket = clean_by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(bucket.size()) < w) {
      std::ostringstream msg;
      msg << "class " << c << " has only " << bucket.size() << " clean samples, need " << w;
      throw std::runtime_error(msg.str());
    }
    fisher_yates_shuffle(bucket, rng);
    for (int i = 0; i < w; ++i) set.indices.push_back(bucket[static_cast<std::size_t>(i)]);
  }
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

namespace {

void write_image_blob(const std::string& path, const std::vector<const Image*>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Image* img : images)
    out.write(reinterpret_cast<const char*>(img->data.data()),
              static_cast<std::streamsize>(img->data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to " + path);
}

void read_image_blob(const std::string& path, std::vector<Image>& images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  for (auto& img : images) {
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated image blob: " + path);
  }
  char extra;
  if (in.read(&extra, 1)) throw std::runtime_error("trailing bytes in image blob: " + path);
}

}  // namespace

void save_dataset_artifact(const DatasetArtifact& artifact, const std::string& dir) {
  const PoisonedDataset& d = artifact.data;
  if (d.samples.empty()) throw std::runtime_error("refusing to save empty dataset");
  const Image& first = d.samples.front().image;

  std::filesystem::create_directories(dir);
  std::ofstream m(dir + "/manifest.txt");
  if (!m) throw std::runtime_error("cannot write manifest in " + dir);
  char buf[64];
  m << "asd-dataset-manifest 1\n";
  m << "class_count " << d.class_count << "\n";
  m << "sample_count " << d.samples.size() << "\n";
  m << "channels " << first.channels << "\n";
  m << "height " << first.height << "\n";
  m << "width " << first.width << "\n";
  m << "images_file images.bin\n";
  m << "target_label " << artifact.policy.target_label << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", artifact.policy.poison_rate);
  m << "poison_rate " << buf << "\n";
  m << "poison_seed " << artifact.policy.rng_seed << "\n";
  m << "trigger " << trigger_kind_name(artifact.trigger.kind) << "\n";
  if (artifact.trigger.kind == TriggerKind::badnets_patch) {
    const Image& p = artifact.trigger.patch;
    m << "anchor " << artifact.trigger.anchor_row << " " << artifact.trigger.anchor_col << "\n";
    m << "patch " << p.channels << " " << p.height << " " << p.width;
    for (float v : p.data) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
      m << " " << buf;
    }
    m << "\n";
  } else if (artifact.trigger.kind == TriggerKind::blend) {
    std::snprintf(buf, sizeof(buf), "%.17g", artifact.trigger.blend_ratio);
    m << "blend_ratio " << buf << "\n";
    m << "pattern_file pattern.bin\n";
  }
  m << "samples\n";
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    m << s.index << " " << i << " " << s.assigned_label << " " << s.ground_truth_label << " "
      << (s.is_poisoned ? 1 : 0) << "\n";
  }
  if (!m) throw std::runtime_error("short write to manifest in " + dir);
  m.close();

  std::vector<const Image*> ptrs;
  ptrs.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    if (!s.image.same_shape(first)) throw std::runtime_error("mixed image shapes in dataset");
    ptrs.push_back(&s.image);
  }
  write_image_blob(dir + "/images.bin", ptrs);
  if (artifact.trigger.kind == TriggerKind::blend)
    write_image_blob(dir + "/pattern.bin", {&artifact.trigger.blend_pattern});
}

DatasetArtifact load_dataset_artifact(const std::string& dir) {
  std::ifstream m(dir + "/manifest.txt");
  if (!m) throw std::runtime_error("cannot open manifest in " + dir);

  std::string magic;
  int version = 0;
  m >> magic >> version;
  if (magic != "asd-dataset-manifest" || version != 1)
    throw std::runtime_error("unrecognized manifest format in " + dir);

  DatasetArtifact art;
  int channels = 0, height = 0, width = 0;
  std::size_t sample_count = 0;
  std::string images_file = "images.bin";
  std::string pattern_file;

  std::string key;
  while (m >> key && key != "samples") {
    if (key == "class_count") m >> art.data.class_count;
    else if (key == "sample_count") m >> sample_count;
    else if (key == "channels") m >> channels;
    else if (key == "height") m >> height;
    else if (key == "width") m >> width;
    else if (key == "images_file") m >> images_file;
    else if (key == "target_label") m >> art.policy.target_label;
    else if (key == "poison_rate") m >> art.policy.poison_rate;
    else if (key == "poison_seed") m >> art.policy.rng_seed;
    else if (key == "trigger") {
      std::string name;
      m >> name;
      art.trigger.kind = trigger_kind_from_name(name);
    } else if (key == "anchor") {
      m >> art.trigger.anchor_row >> art.trigger.anchor_col;
    } else if (key == "patch") {
      int pc = 0, ph = 0, pw = 0;
      m >> pc >> ph >> pw;
      art.trigger.patch = make_image(pc, ph, pw);
      for (auto& v : art.trigger.patch.data) m >> v;
    } else if (key == "blend_ratio") {
      m >> art.trigger.blend_ratio;
    } else if (key == "pattern_file") {
      m >> pattern_file;
    } else {
      throw std::runtime_error("unknown manifest key: " + key);
    }
    if (!m) throw std::runtime_error("malformed manifest value for key: " + key);
  }
  if (key != "samples") throw std::runtime_error("manifest missing samples section in " + dir);
  if (channels <= 0 || height <= 0 || width <= 0 || sample_count == 0)
    throw std::runtime_error("manifest missing image geometry in " + dir);

  art.data.samples.resize(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) {
    auto& s = art.data.samples[i];
    std::size_t record = 0;
    int pois = 0;
    m >> s.index >> record >> s.assigned_label >> s.ground_truth_label >> pois;
    if (!m) throw std::runtime_error("manifest sample records truncated in " + dir);
    if (record != i) throw std::runtime_error("manifest image records out of order in " + dir);
    s.is_poisoned = pois != 0;
    s.image = make_image(channels, height, width);
  }

  {
    std::ifstream in(dir + "/" + images_file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + dir + "/" + images_file);
    for (auto& s : art.data.samples) {
      in.read(reinterpret_cast<char*>(s.image.data.data()),
              static_cast<std::streamsize>(s.image.data.size() * sizeof(float)));
      if (!in) throw std::runtime_error("truncated image blob in " + dir);
    }
    char extra;
    if (in.read(&extra, 1)) throw std::runtime_error("trailing bytes in image blob in " + dir);
  }

  if (art.trigger.kind == TriggerKind::blend) {
    if (pattern_file.empty()) throw std::runtime_error("blend manifest missing pattern_file");
    art.trigger.blend_pattern = make_image(channels, height, width);
    std::vector<Image> one;
    one.push_back(std::move(art.trigger.blend_pattern));
    read_image_blob(dir + "/" + pattern_file, one);
    art.trigger.blend_pattern = std::move(one.front());
  }
  return art;
}

}  // namespace asd
