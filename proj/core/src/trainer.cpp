#include "asd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace asd {

TrainState make_train_state(const TrainerConfig& cfg) {
  validate(cfg.schedule);
  validate(cfg.split);
  validate(cfg.mixmatch);
  if (cfg.learning_rate <= 0.0) throw std::runtime_error("learning rate must be positive");
  TrainState state;
  state.model = build_model(cfg.model, cfg.seed);
  state.optimizer = std::make_unique<nn::Adam<float>>(cfg.learning_rate);
  state.train_rng = make_stream(cfg.seed, "train");
  state.virtual_rng = make_stream(cfg.seed, "virtual");
  return state;
}

BatchCycler::BatchCycler(std::vector<int> indices, Rng& rng) : indices_(std::move(indices)), rng_(rng) {
  fisher_yates_shuffle(indices_, rng_);
}

std::vector<int> BatchCycler::next(int count) {
  std::vector<int> out;
  if (indices_.empty()) return out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    if (pos_ == indices_.size()) {
      fisher_yates_shuffle(indices_, rng_);
      pos_ = 0;
    }
    out.push_back(indices_[pos_++]);
  }
  return out;
}

EpochStats semi_supervised_epoch(TrainState& state, const PoisonedDataset& dataset,
                                 const DataPools& pools, const MixMatchConfig& cfg) {
  validate(cfg);
  if (pools.clean_indices.empty())
    throw std::runtime_error("semi-supervised epoch with an empty clean pool (scheduling bug)");

  const int iterations =
      static_cast<int>((dataset.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                       static_cast<std::size_t>(cfg.batch_size));
  BatchCycler labeled_cycle(pools.clean_indices, state.train_rng);
  BatchCycler unlabeled_cycle(pools.polluted_indices, state.train_rng);
  const auto all_params = nn::flatten_groups(state.model->param_groups());

  EpochStats stats;
  for (int it = 0; it < iterations; ++it) {
    const std::vector<int> li = labeled_cycle.next(cfg.batch_size);
    const std::vector<int> ui = unlabeled_cycle.next(cfg.batch_size);

    std::vector<const Image*> labeled;
    std::vector<int> labels;
    labeled.reserve(li.size());
    labels.reserve(li.size());
    for (int i : li) {
      labeled.push_back(&dataset.samples[static_cast<std::size_t>(i)].image);
      labels.push_back(dataset.samples[static_cast<std::size_t>(i)].assigned_label);
    }
    std::vector<const Image*> unlabeled;
    unlabeled.reserve(ui.size());
    for (int i : ui) unlabeled.push_back(&dataset.samples[static_cast<std::size_t>(i)].image);

    const MixDraw draw = draw_mixmatch_randomness(state.train_rng, static_cast<int>(labeled.size()),
                                                  static_cast<int>(unlabeled.size()), cfg);
    const MixedBatch batch = build_mixmatch_batch(*state.model, labeled, labels, unlabeled, cfg, draw);
    state.model->zero_grad();
    const MixLoss loss = mixmatch_loss_and_backward(*state.model, batch, cfg);
    if (!std::isfinite(loss.total)) throw std::runtime_error("non-finite training loss");
    state.optimizer->step(all_params);

    stats.mean_total += loss.total;
    stats.mean_supervised += loss.supervised;
    stats.mean_unsupervised += loss.unsupervised;
  }
  stats.iterations = iterations;
  if (iterations > 0) {
    stats.mean_total /= iterations;
    stats.mean_supervised /= iterations;
    stats.mean_unsupervised /= iterations;
  }
  ++state.epoch;
  return stats;
}

namespace {

double supervised_pass(Net& net, const std::vector<nn::ParamRef<float>>& step_params,
                       nn::Optimizer<float>& opt, const PoisonedDataset& dataset,
                       const std::vector<int>& order, int batch_size) {
  double total = 0.0;
  int batches = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> imgs;
    imgs.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i)
      imgs.push_back(&dataset.samples[static_cast<std::size_t>(order[i])].image);

    const nn::Mat<float> logits = net.forward(assemble_input(imgs), true);
    const nn::Mat<float> probs = softmax_columns(logits);
    const Eigen::Index b = logits.cols();
    nn::Mat<float> dlogits = probs;
    double loss = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const int y = dataset.samples[static_cast<std::size_t>(order[start + static_cast<std::size_t>(j)])]
                        .assigned_label;
      loss -= std::log(std::max(static_cast<double>(probs(y, j)), 1e-12));
      dlogits(y, j) -= 1.0f;
    }
    dlogits /= static_cast<float>(b);
    net.zero_grad();
    net.backward(dlogits);
    opt.step(step_params);
    total += loss / static_cast<double>(b);
    ++batches;
  }
  return batches > 0 ? total / batches : 0.0;
}

}  // namespace

double virtual_supervised_epoch(VirtualModel& vm, const PoisonedDataset& dataset,
                                const SplitConfig& cfg, Rng& rng) {
  validate(cfg);
  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  fisher_yates_shuffle(order, rng);

  std::unique_ptr<nn::Optimizer<float>> opt;
  if (cfg.virtual_optimizer == "sgd")
    opt = std::make_unique<nn::Sgd<float>>(cfg.virtual_lr);
  else
    opt = std::make_unique<nn::Adam<float>>(cfg.virtual_lr);
  return supervised_pass(*vm.net, vm.trainable, *opt, dataset, order, cfg.virtual_batch);
}

double supervised_epoch(TrainState& state, const PoisonedDataset& dataset, int batch_size) {
  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  fisher_yates_shuffle(order, state.train_rng);
  const auto all_params = nn::flatten_groups(state.model->param_groups());
  const double loss =
      supervised_pass(*state.model, all_params, *state.optimizer, dataset, order, batch_size);
  ++state.epoch;
  return loss;
}

namespace {

MetricsRecord evaluate_epoch(Net& model, const LabeledDataset& clean_test,
                             const PoisonedDataset& attack_test, int target_label, int epoch,
                             int stage, const DataPools* pools, const PoisonedDataset* train) {
  MetricsRecord r;
  r.epoch = epoch;
  r.stage = stage;
  NetClassifier clf(model);
  r.acc = compute_acc(clf, clean_test);
  r.asr = compute_asr(clf, attack_test, target_label);
  if (pools && train) {
    const PurityResult purity = split_purity(*pools, *train);
    r.pool_clean_size = pools->clean_indices.size();
    r.poisoned_in_clean_pool = purity.poisoned_in_clean;
    r.split_purity = purity.purity;
  }
  return r;
}

}  // namespace

TrainResult run_asd(TrainState& state, const PoisonedDataset& train, const LabeledDataset& clean_test,
                    const PoisonedDataset& attack_test, int target_label, const SeedSet& seeds,
                    const TrainerConfig& cfg, const EpochObserver& observer) {
  validate(cfg.schedule);
  validate(cfg.split);
  validate(cfg.mixmatch);
  TrainResult result;

  const auto loss_after_fn = [&](const PerSampleLosses& before) {
    (void)before;
    VirtualModel vm = clone_virtual_model(*state.model, cfg.split.partition);
    virtual_supervised_epoch(vm, train, cfg.split, state.virtual_rng);
    return per_sample_losses(*vm.net, train, LossKind::sce);
  };

  for (int epoch = state.epoch; epoch < cfg.schedule.t3; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport report;
    report.epoch = epoch;
    report.stage = cfg.schedule.stage_of(epoch);
    report.pools = rebuild_pools(epoch, *state.model, train, cfg.split, cfg.schedule, seeds,
                                 loss_after_fn, &report.ranking_losses);
    report.stats = semi_supervised_epoch(state, train, report.pools, cfg.mixmatch);
    report.metrics = evaluate_epoch(*state.model, clean_test, attack_test, target_label, epoch,
                                    report.stage, &report.pools, &train);
    report.metrics.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(report.metrics);
    if (observer) observer(report, state);
  }
  return result;
}

TrainResult run_supervised(TrainState& state, const PoisonedDataset& train,
                           const LabeledDataset& clean_test, const PoisonedDataset& attack_test,
                           int target_label, const TrainerConfig& cfg, const EpochObserver& observer) {
  validate(cfg.schedule);
  TrainResult result;
  for (int epoch = state.epoch; epoch < cfg.schedule.t3; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport report;
    report.epoch = epoch;
    report.stage = 0;
    EpochStats stats;
    stats.mean_supervised = supervised_epoch(state, train, cfg.mixmatch.batch_size);
    stats.mean_total = stats.mean_supervised;
    stats.iterations = static_cast<int>((train.size() + static_cast<std::size_t>(cfg.mixmatch.batch_size) - 1) /
                                        static_cast<std::size_t>(cfg.mixmatch.batch_size));
    report.stats = stats;
    report.metrics = evaluate_epoch(*state.model, clean_test, attack_test, target_label, epoch, 0,
                                    nullptr, nullptr);
    report.metrics.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(report.metrics);
    if (observer) observer(report, state);
  }
  return result;
}

}  // namespace asd
