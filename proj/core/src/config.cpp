#include "asd/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "asd/kv.hpp"

namespace asd {

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw std::runtime_error("config key " + key + ": " + why);
}

void reject_unknown(const KvNode& section, const std::string& prefix,
                    const std::set<std::string>& known) {
  for (const auto& key : section.keys())
    if (!known.count(key)) throw std::runtime_error("unknown config key: " + prefix + key);
}

std::uint64_t get_seed(const KvNode& s, const std::string& key, std::uint64_t devault) {
  if (!s.has(key)) return devault;
  const long long v = s.get_int(key);
  if (v < 0) bad_key(key, "seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

int get_int_checked(const KvNode& s, const std::string& prefix, const std::string& key, int devault,
                    long long lo, long long hi) {
  if (!s.has(key)) return devault;
  const long long v = s.get_int(key);
  if (v < lo || v > hi) {
    std::ostringstream msg;
    msg << "must be in [" << lo << "," << hi << "]";
    bad_key(prefix + key, msg.str());
  }
  return static_cast<int>(v);
}

double get_double_checked(const KvNode& s, const std::string& prefix, const std::string& key,
                          double devault, double lo, double hi) {
  if (!s.has(key)) return devault;
  const double v = s.get_double(key);
  if (!(v >= lo && v <= hi)) {
    std::ostringstream msg;
    msg << "must be in [" << lo << "," << hi << "]";
    bad_key(prefix + key, msg.str());
  }
  return v;
}

const KvNode& section_or_throw(const KvNode& root, const std::string& name) {
  const KvNode* s = root.child(name);
  if (!s) throw std::runtime_error("config key " + name + ": must be a section");
  return *s;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  const KvNode root = parse_kv_text(text);
  reject_unknown(root, "", {"dataset", "attack", "defense", "mixmatch", "model", "train", "output"});

  ExperimentConfig cfg;

  if (root.has("dataset")) {
    const KvNode& s = section_or_throw(root, "dataset");
    reject_unknown(s, "dataset.",
                   {"source", "cifar_root", "subset_fraction", "train_size", "test_size",
                    "hard_fraction", "seed"});
    if (s.has("source")) cfg.dataset.source = s.get_string("source");
    if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "cifar10")
      bad_key("dataset.source", "must be synthetic or cifar10");
    if (s.has("cifar_root")) cfg.dataset.cifar_root = s.get_string("cifar_root");
    cfg.dataset.subset_fraction =
        get_double_checked(s, "dataset.", "subset_fraction", cfg.dataset.subset_fraction, 1e-9, 1.0);
    cfg.dataset.train_size = get_int_checked(s, "dataset.", "train_size", cfg.dataset.train_size, 10, 10000000);
    cfg.dataset.test_size = get_int_checked(s, "dataset.", "test_size", cfg.dataset.test_size, 10, 10000000);
    cfg.dataset.hard_fraction =
        get_double_checked(s, "dataset.", "hard_fraction", cfg.dataset.hard_fraction, 0.0, 1.0);
    cfg.dataset.seed = get_seed(s, "seed", cfg.dataset.seed);
  }

  if (root.has("attack")) {
    const KvNode& s = section_or_throw(root, "attack");
    reject_unknown(s, "attack.",
                   {"trigger", "target_label", "poison_rate", "seed", "patch_side", "patch_value",
                    "anchor_row", "anchor_col", "blend_ratio", "pattern_seed"});
    if (s.has("trigger")) cfg.attack.trigger = s.get_string("trigger");
    trigger_kind_from_name(cfg.attack.trigger);  // rejects unknown names
    cfg.attack.target_label = get_int_checked(s, "attack.", "target_label", cfg.attack.target_label, 0, 1000);
    cfg.attack.poison_rate = get_double_checked(s, "attack.", "poison_rate", cfg.attack.poison_rate, 0.0, 1.0);
    cfg.attack.seed = get_seed(s, "seed", cfg.attack.seed);
    cfg.attack.patch_side = get_int_checked(s, "attack.", "patch_side", cfg.attack.patch_side, 0, 32);
    cfg.attack.patch_value = get_double_checked(s, "attack.", "patch_value", cfg.attack.patch_value, 0.0, 1.0);
    cfg.attack.anchor_row = get_int_checked(s, "attack.", "anchor_row", cfg.attack.anchor_row, 0, 31);
    cfg.attack.anchor_col = get_int_checked(s, "attack.", "anchor_col", cfg.attack.anchor_col, 0, 31);
    cfg.attack.blend_ratio = get_double_checked(s, "attack.", "blend_ratio", cfg.attack.blend_ratio, 0.0, 1.0);
    cfg.attack.pattern_seed = get_seed(s, "pattern_seed", cfg.attack.pattern_seed);
  }

  if (root.has("defense")) {
    const KvNode& s = section_or_throw(root, "defense");
    reject_unknown(s, "defense.",
                   {"seed_per_class", "growth_per_step", "epochs_per_step", "alpha_pct", "gamma_pct",
                    "virtual_lr", "virtual_optimizer", "virtual_batch", "partition", "t1", "t2", "t3",
                    "seed_draw"});
    SplitConfig& sp = cfg.trainer.split;
    sp.seed_per_class = get_int_checked(s, "defense.", "seed_per_class", sp.seed_per_class, 0, 1000000);
    sp.growth_per_step = get_int_checked(s, "defense.", "growth_per_step", sp.growth_per_step, 0, 1000000);
    sp.epochs_per_step = get_int_checked(s, "defense.", "epochs_per_step", sp.epochs_per_step, 1, 1000000);
    sp.alpha_pct = get_double_checked(s, "defense.", "alpha_pct", sp.alpha_pct, 0.0, 100.0);
    sp.gamma_pct = get_double_checked(s, "defense.", "gamma_pct", sp.gamma_pct, 0.0, 100.0);
    sp.virtual_lr = get_double_checked(s, "defense.", "virtual_lr", sp.virtual_lr, 1e-12, 1000.0);
    if (s.has("virtual_optimizer")) sp.virtual_optimizer = s.get_string("virtual_optimizer");
    if (sp.virtual_optimizer != "sgd" && sp.virtual_optimizer != "adam")
      bad_key("defense.virtual_optimizer", "must be sgd or adam");
    sp.virtual_batch = get_int_checked(s, "defense.", "virtual_batch", sp.virtual_batch, 1, 1000000);
    if (s.has("partition")) sp.partition.kind = s.get_string("partition");
    if (sp.partition.kind != "last3" && sp.partition.kind != "half-extractor" &&
        sp.partition.kind != "all")
      bad_key("defense.partition", "must be last3, half-extractor or all");
    StageSchedule& t = cfg.trainer.schedule;
    t.t1 = get_int_checked(s, "defense.", "t1", t.t1, 1, 1000000);
    t.t2 = get_int_checked(s, "defense.", "t2", t.t2, 1, 1000000);
    t.t3 = get_int_checked(s, "defense.", "t3", t.t3, 1, 1000000);
    if (!(t.t1 <= t.t2 && t.t2 <= t.t3))
      bad_key("defense.t1/t2/t3", "must satisfy t1 <= t2 <= t3");
    cfg.seed_draw = get_seed(s, "seed_draw", cfg.seed_draw);
  }

  if (root.has("mixmatch")) {
    const KvNode& s = section_or_throw(root, "mixmatch");
    reject_unknown(s, "mixmatch.",
                   {"temperature", "lambda_u", "alpha_mix", "k_augment", "batch_size", "crop_pad"});
    MixMatchConfig& m = cfg.trainer.mixmatch;
    m.temperature = get_double_checked(s, "mixmatch.", "temperature", m.temperature, 1e-9, 1000.0);
    m.lambda_u = get_double_checked(s, "mixmatch.", "lambda_u", m.lambda_u, 0.0, 1e9);
    m.alpha_mix = get_double_checked(s, "mixmatch.", "alpha_mix", m.alpha_mix, 1e-9, 1000.0);
    m.k_augment = get_int_checked(s, "mixmatch.", "k_augment", m.k_augment, 1, 16);
    m.batch_size = get_int_checked(s, "mixmatch.", "batch_size", m.batch_size, 1, 8192);
    m.crop_pad = get_int_checked(s, "mixmatch.", "crop_pad", m.crop_pad, 0, 16);
  }

  if (root.has("model")) {
    const KvNode& s = section_or_throw(root, "model");
    reject_unknown(s, "model.", {"arch", "base_width"});
    if (s.has("arch")) cfg.trainer.model.arch = s.get_string("arch");
    if (cfg.trainer.model.arch != "small-cnn" && cfg.trainer.model.arch != "resnet18-like")
      bad_key("model.arch", "must be small-cnn or resnet18-like");
    cfg.trainer.model.base_width =
        get_int_checked(s, "model.", "base_width", cfg.trainer.model.base_width, 1, 4096);
  }

  if (root.has("train")) {
    const KvNode& s = section_or_throw(root, "train");
    reject_unknown(s, "train.", {"learning_rate", "seed", "eval_every", "checkpoint_every"});
    cfg.trainer.learning_rate =
        get_double_checked(s, "train.", "learning_rate", cfg.trainer.learning_rate, 1e-12, 1000.0);
    cfg.trainer.seed = get_seed(s, "seed", cfg.trainer.seed);
    cfg.eval_every = get_int_checked(s, "train.", "eval_every", cfg.eval_every, 1, 1000000);
    cfg.checkpoint_every = get_int_checked(s, "train.", "checkpoint_every", cfg.checkpoint_every, 0, 1000000);
  }

  if (root.has("output")) {
    const KvNode& s = section_or_throw(root, "output");
    reject_unknown(s, "output.", {"dir"});
    if (s.has("dir")) cfg.output_dir = s.get_string("dir");
  }

  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.dataset.source == "cifar10" && cfg.dataset.cifar_root.empty())
    bad_key("dataset.cifar_root", "required when dataset.source is cifar10");
  validate(cfg.trainer.schedule);
  validate(cfg.trainer.split);
  validate(cfg.trainer.mixmatch);
  if (cfg.trainer.model.class_count != 10)
    bad_key("model", "class count is fixed at 10 for the supported datasets");
  if (cfg.attack.target_label >= cfg.trainer.model.class_count)
    bad_key("attack.target_label", "outside the class range");
  if (cfg.output_dir.empty()) bad_key("output.dir", "must not be empty");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "dataset {\n";
  out << "  source = " << cfg.dataset.source << "\n";
  if (!cfg.dataset.cifar_root.empty()) out << "  cifar_root = " << cfg.dataset.cifar_root << "\n";
  out << "  subset_fraction = " << fmt(cfg.dataset.subset_fraction) << "\n";
  out << "  train_size = " << cfg.dataset.train_size << "\n";
  out << "  test_size = " << cfg.dataset.test_size << "\n";
  out << "  hard_fraction = " << fmt(cfg.dataset.hard_fraction) << "\n";
  out << "  seed = " << cfg.dataset.seed << "\n";
  out << "}\n";
  out << "attack {\n";
  out << "  trigger = " << cfg.attack.trigger << "\n";
  out << "  target_label = " << cfg.attack.target_label << "\n";
  out << "  poison_rate = " << fmt(cfg.attack.poison_rate) << "\n";
  out << "  seed = " << cfg.attack.seed << "\n";
  out << "  patch_side = " << cfg.attack.patch_side << "\n";
  out << "  patch_value = " << fmt(cfg.attack.patch_value) << "\n";
  out << "  anchor_row = " << cfg.attack.anchor_row << "\n";
  out << "  anchor_col = " << cfg.attack.anchor_col << "\n";
  out << "  blend_ratio = " << fmt(cfg.attack.blend_ratio) << "\n";
  out << "  pattern_seed = " << cfg.attack.pattern_seed << "\n";
  out << "}\n";
  out << "defense {\n";
  out << "  seed_per_class = " << cfg.trainer.split.seed_per_class << "\n";
  out << "  growth_per_step = " << cfg.trainer.split.growth_per_step << "\n";
  out << "  epochs_per_step = " << cfg.trainer.split.epochs_per_step << "\n";
  out << "  alpha_pct = " << fmt(cfg.trainer.split.alpha_pct) << "\n";
  out << "  gamma_pct = " << fmt(cfg.trainer.split.gamma_pct) << "\n";
  out << "  virtual_lr = " << fmt(cfg.trainer.split.virtual_lr) << "\n";
  out << "  virtual_optimizer = " << cfg.trainer.split.virtual_optimizer << "\n";
  out << "  virtual_batch = " << cfg.trainer.split.virtual_batch << "\n";
  out << "  partition = " << cfg.trainer.split.partition.kind << "\n";
  out << "  t1 = " << cfg.trainer.schedule.t1 << "\n";
  out << "  t2 = " << cfg.trainer.schedule.t2 << "\n";
  out << "  t3 = " << cfg.trainer.schedule.t3 << "\n";
  out << "  seed_draw = " << cfg.seed_draw << "\n";
  out << "}\n";
  out << "mixmatch {\n";
  out << "  temperature = " << fmt(cfg.trainer.mixmatch.temperature) << "\n";
  out << "  lambda_u = " << fmt(cfg.trainer.mixmatch.lambda_u) << "\n";
  out << "  alpha_mix = " << fmt(cfg.trainer.mixmatch.alpha_mix) << "\n";
  out << "  k_augment = " << cfg.trainer.mixmatch.k_augment << "\n";
  out << "  batch_size = " << cfg.trainer.mixmatch.batch_size << "\n";
  out << "  crop_pad = " << cfg.trainer.mixmatch.crop_pad << "\n";
  out << "}\n";
  out << "model {\n";
  out << "  arch = " << cfg.trainer.model.arch << "\n";
  out << "  base_width = " << cfg.trainer.model.base_width << "\n";
  out << "}\n";
  out << "train {\n";
  out << "  learning_rate = " << fmt(cfg.trainer.learning_rate) << "\n";
  out << "  seed = " << cfg.trainer.seed << "\n";
  out << "  eval_every = " << cfg.eval_every << "\n";
  out << "  checkpoint_every = " << cfg.checkpoint_every << "\n";
  out << "}\n";
  out << "output {\n";
  out << "  dir = " << cfg.output_dir << "\n";
  out << "}\n";
  return out.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b) && a.mode == b.mode;
}

TriggerSpec trigger_from_config(const AttackConfig& attack, int channels, int height, int width) {
  const TriggerKind kind = trigger_kind_from_name(attack.trigger);
  if (kind == TriggerKind::badnets_patch)
    return make_badnets_patch(attack.patch_side, channels, static_cast<float>(attack.patch_value),
                              attack.anchor_row, attack.anchor_col);
  if (kind == TriggerKind::blend)
    return make_blend_trigger(channels, height, width, attack.blend_ratio, attack.pattern_seed);
  return TriggerSpec{};
}

PoisonPolicy policy_from_config(const AttackConfig& attack) {
  PoisonPolicy p;
  p.target_label = attack.target_label;
  p.poison_rate = attack.poison_rate;
  p.rng_seed = attack.seed;
  return p;
}

}  // namespace asd
