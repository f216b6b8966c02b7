// Microbenchmarks for the hot paths: convolution, full-model forwards, the
// per-sample ranking pass, one semi-supervised step, pool selection, and
// trigger injection. Run manually; not part of the test suite.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/losses.hpp"
#include "asd/model.hpp"
#include "asd/nn.hpp"
#include "asd/poison.hpp"
#include "asd/pools.hpp"
#include "asd/rng.hpp"

namespace {

asd::nn::Mat<float> random_input(int rows, int cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  asd::nn::Mat<float> x(rows, cols);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = dist(rng);
  return x;
}

// 512 synthetic training images, wrapped with their own labels (no attack).
const asd::PoisonedDataset& bench_dataset() {
  static const asd::PoisonedDataset data = [] {
    asd::SyntheticSpec spec;
    spec.train_size = 512;
    spec.seed = 7;
    return asd::wrap_clean_dataset(asd::generate_synthetic(spec, false));
  }();
  return data;
}

// Label-only dataset at CIFAR-10 scale for selection benchmarks; 1x1 images
// keep it in memory while the label layout stays realistic.
const asd::PoisonedDataset& label_only_dataset(std::size_t n) {
  static const asd::PoisonedDataset data = [n] {
    asd::PoisonedDataset d;
    d.class_count = 10;
    d.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      asd::PoisonedSample s;
      s.image = asd::make_image(1, 1, 1, 0.0f);
      s.assigned_label = static_cast<int>(i % 10);
      s.ground_truth_label = s.assigned_label;
      s.index = static_cast<int>(i);
      d.samples.push_back(std::move(s));
    }
    return d;
  }();
  return data;
}

std::vector<double> random_losses(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 4.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

void bm_conv_forward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  asd::Rng rng = asd::make_stream(11, "bench-conv");
  asd::nn::Conv2d<float> conv("bench", 16, 16, 3, 1, 1, 32, 32);
  conv.init_he(rng);
  const asd::nn::Mat<float> x = random_input(16, 32 * 32 * batch, 101);
  for (auto _ : state) {
    asd::nn::Mat<float> y = conv.forward(x, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_conv_forward)->Arg(8)->Arg(64);

void bm_conv_backward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  asd::Rng rng = asd::make_stream(12, "bench-conv");
  asd::nn::Conv2d<float> conv("bench", 16, 16, 3, 1, 1, 32, 32);
  conv.init_he(rng);
  const asd::nn::Mat<float> x = random_input(16, 32 * 32 * batch, 102);
  conv.forward(x, true);
  const asd::nn::Mat<float> dy = random_input(16, 32 * 32 * batch, 103);
  for (auto _ : state) {
    asd::nn::Mat<float> dx = conv.backward(dy);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_conv_backward)->Arg(8)->Arg(64);

void bm_small_cnn_forward(benchmark::State& state) {
  auto model = asd::build_model({"small-cnn", 10, 3, 32, 32, 16}, 21);
  const asd::nn::Mat<float> x = random_input(3, 32 * 32 * 64, 104);
  for (auto _ : state) {
    asd::nn::Mat<float> y = model->forward(x, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(bm_small_cnn_forward);

void bm_resnet18_forward(benchmark::State& state) {
  auto model = asd::build_model({"resnet18-like", 10, 3, 32, 32, 16}, 22);
  const asd::nn::Mat<float> x = random_input(3, 32 * 32 * 8, 105);
  for (auto _ : state) {
    asd::nn::Mat<float> y = model->forward(x, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(bm_resnet18_forward);

// The ranking pass that precedes every split: eval-mode losses on all samples.
void bm_per_sample_losses(benchmark::State& state) {
  const asd::PoisonedDataset& data = bench_dataset();
  auto model = asd::build_model({"small-cnn", 10, 3, 32, 32, 16}, 23);
  for (auto _ : state) {
    asd::PerSampleLosses losses = asd::per_sample_losses(*model, data, asd::LossKind::sce, 256);
    benchmark::DoNotOptimize(losses.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(bm_per_sample_losses);

// One full semi-supervised step: randomness draw, guess + mix, loss, backward.
void bm_mixmatch_step(benchmark::State& state) {
  const asd::PoisonedDataset& data = bench_dataset();
  auto model = asd::build_model({"small-cnn", 10, 3, 32, 32, 16}, 24);
  asd::MixMatchConfig cfg;
  asd::Rng rng = asd::make_stream(25, "bench-mixmatch");
  std::vector<const asd::Image*> labeled, unlabeled;
  std::vector<int> labels;
  for (int i = 0; i < cfg.batch_size; ++i) {
    labeled.push_back(&data.samples[static_cast<std::size_t>(i)].image);
    labels.push_back(data.samples[static_cast<std::size_t>(i)].assigned_label);
    unlabeled.push_back(&data.samples[static_cast<std::size_t>(i + cfg.batch_size)].image);
  }
  for (auto _ : state) {
    asd::MixDraw draw = asd::draw_mixmatch_randomness(rng, cfg.batch_size, cfg.batch_size, cfg);
    asd::MixedBatch batch = asd::build_mixmatch_batch(*model, labeled, labels, unlabeled, cfg, draw);
    asd::MixLoss loss = asd::mixmatch_loss_and_backward(*model, batch, cfg);
    benchmark::DoNotOptimize(loss.total);
  }
  state.SetItemsProcessed(state.iterations() * 2 * cfg.batch_size);
}
BENCHMARK(bm_mixmatch_step);

void bm_class_aware_split(benchmark::State& state) {
  const std::size_t n = 50000;
  const asd::PoisonedDataset& data = label_only_dataset(n);
  const asd::SeedSet seeds = asd::draw_seed_samples(data, 10, 31);
  asd::PerSampleLosses losses;
  losses.values = random_losses(n, 106);
  for (auto _ : state) {
    asd::DataPools pools = asd::class_aware_split(losses, data, 30, seeds);
    benchmark::DoNotOptimize(pools.clean_indices.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(bm_class_aware_split);

void bm_class_agnostic_split(benchmark::State& state) {
  const std::size_t n = 50000;
  const asd::SeedSet seeds = asd::draw_seed_samples(label_only_dataset(n), 10, 31);
  asd::PerSampleLosses losses;
  losses.values = random_losses(n, 107);
  for (auto _ : state) {
    asd::DataPools pools = asd::class_agnostic_split(losses, n, 50.0, seeds);
    benchmark::DoNotOptimize(pools.clean_indices.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(bm_class_agnostic_split);

void bm_meta_split_select(benchmark::State& state) {
  const std::size_t n = 50000;
  const asd::SeedSet seeds = asd::draw_seed_samples(label_only_dataset(n), 10, 31);
  asd::PerSampleLosses before, after;
  before.values = random_losses(n, 108);
  after.values = random_losses(n, 109);
  for (auto _ : state) {
    asd::DataPools pools = asd::meta_split_select(before, after, 50.0, seeds);
    benchmark::DoNotOptimize(pools.clean_indices.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(bm_meta_split_select);

void bm_inject_badnets(benchmark::State& state) {
  const asd::TriggerSpec trigger = asd::make_badnets_patch(3, 3, 1.0f, 0, 0);
  asd::Image image = asd::make_image(3, 32, 32, 0.5f);
  for (auto _ : state) {
    asd::Image out = asd::inject_trigger(image, trigger);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_inject_badnets);

void bm_inject_blend(benchmark::State& state) {
  const asd::TriggerSpec trigger = asd::make_blend_trigger(3, 32, 32, 0.15, 5);
  asd::Image image = asd::make_image(3, 32, 32, 0.5f);
  for (auto _ : state) {
    asd::Image out = asd::inject_trigger(image, trigger);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_inject_blend);

}  // namespace

BENCHMARK_MAIN();
