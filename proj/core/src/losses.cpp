#include "asd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asd {

void check_simplex(const ProbVector& p) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0)) throw std::runtime_error("probability vector has a negative or NaN entry");
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::runtime_error("probability vector does not sum to 1");
}

double cross_entropy(const ProbVector& pred, int label, double floor) {
  check_simplex(pred);
  if (label < 0 || label >= pred.size()) throw std::runtime_error("label outside class range");
  return -std::log(std::max(pred[label], floor));
}

ProbVector cross_entropy_grad(const ProbVector& pred, int label, double floor) {
  check_simplex(pred);
  if (label < 0 || label >= pred.size()) throw std::runtime_error("label outside class range");
  ProbVector g = ProbVector::Zero(pred.size());
  if (pred[label] > floor) g[label] = -1.0 / pred[label];
  return g;
}

double reverse_cross_entropy(const ProbVector& pred, int label, double floor) {
  check_simplex(pred);
  if (label < 0 || label >= pred.size()) throw std::runtime_error("label outside class range");
  // q = onehot(label) clamped at floor, so all off-label terms share log(floor).
  double off_label = 0.0;
  for (Eigen::Index j = 0; j < pred.size(); ++j)
    if (j != label) off_label += pred[j];
  return -std::log(floor) * off_label;
}

double symmetric_cross_entropy(const ProbVector& pred, int label, const SceParams& params) {
  return params.alpha * cross_entropy(pred, label, params.floor) +
         params.beta * reverse_cross_entropy(pred, label, params.floor);
}

ProbVector symmetric_cross_entropy_grad(const ProbVector& pred, int label, const SceParams& params) {
  ProbVector g = params.alpha * cross_entropy_grad(pred, label, params.floor);
  const double off = -std::log(params.floor);
  for (Eigen::Index j = 0; j < pred.size(); ++j)
    if (j != label) g[j] += params.beta * off;
  return g;
}

ProbVector sharpen(const ProbVector& p, double temperature) {
  if (temperature <= 0.0) throw std::runtime_error("sharpening temperature must be positive");
  check_simplex(p);
  ProbVector q(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) q[i] = std::pow(p[i], 1.0 / temperature);
  const double sum = q.sum();
  if (sum <= 0.0) throw std::runtime_error("sharpening collapsed to zero mass");
  return q / sum;
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::sce: return "sce";
    case LossKind::reduction: return "reduction";
  }
  throw std::runtime_error("unknown loss kind");
}

PerSampleLosses per_sample_losses(Net& model, const PoisonedDataset& dataset, LossKind kind,
                                  int batch_size) {
  if (kind == LossKind::reduction)
    throw std::runtime_error("reduction losses are a difference of two loss vectors, not evaluable");
  PerSampleLosses out;
  out.kind = kind;
  out.values.resize(dataset.size());
  const SceParams sce;
  for (std::size_t start = 0; start < dataset.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(dataset.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> imgs;
    imgs.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) imgs.push_back(&dataset.samples[i].image);
    const nn::Mat<float> logits = model.forward(assemble_input(imgs), false);
    const nn::Mat<float> probs = softmax_columns(logits);
    for (std::size_t i = start; i < stop; ++i) {
      ProbVector p = probs.col(static_cast<Eigen::Index>(i - start)).cast<double>();
      p /= p.sum();  // clear float rounding so the simplex check holds exactly
      const int label = dataset.samples[i].assigned_label;
      out.values[i] = kind == LossKind::ce ? cross_entropy(p, label, sce.floor)
                                           : symmetric_cross_entropy(p, label, sce);
    }
  }
  return out;
}

void validate(const MixMatchConfig& cfg) {
  if (cfg.temperature <= 0.0) throw std::runtime_error("mixmatch temperature must be positive");
  if (cfg.lambda_u < 0.0) throw std::runtime_error("unsupervised weight must be non-negative");
  if (cfg.alpha_mix <= 0.0) throw std::runtime_error("mixup concentration must be positive");
  if (cfg.k_augment < 1) throw std::runtime_error("augmentation count must be at least 1");
  if (cfg.batch_size < 1) throw std::runtime_error("batch size must be at least 1");
  if (cfg.crop_pad < 0) throw std::runtime_error("crop padding must be non-negative");
}

MixDraw draw_mixmatch_randomness(Rng& rng, int n_labeled, int n_unlabeled, const MixMatchConfig& cfg) {
  validate(cfg);
  MixDraw d;
  d.labeled_aug.reserve(static_cast<std::size_t>(n_labeled));
  for (int i = 0; i < n_labeled; ++i) d.labeled_aug.push_back(draw_crop_flip(rng, cfg.crop_pad));
  d.unlabeled_aug.reserve(static_cast<std::size_t>(n_unlabeled) * cfg.k_augment);
  for (int i = 0; i < n_unlabeled * cfg.k_augment; ++i)
    d.unlabeled_aug.push_back(draw_crop_flip(rng, cfg.crop_pad));
  const int total = n_labeled + n_unlabeled * cfg.k_augment;
  d.perm.resize(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) d.perm[static_cast<std::size_t>(i)] = i;
  fisher_yates_shuffle(d.perm, rng);
  d.lambda.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const double l = sample_beta(rng, cfg.alpha_mix, cfg.alpha_mix);
    d.lambda.push_back(std::max(l, 1.0 - l));
  }
  return d;
}

Image mix_images(const Image& a, const Image& b, double lp) {
  if (!a.same_shape(b)) throw std::runtime_error("cannot mix images of different shapes");
  Image out = make_image(a.channels, a.height, a.width);
  const float l = static_cast<float>(lp);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = l * a.data[i] + (1.0f - l) * b.data[i];
  return out;
}

nn::Mat<float> guess_labels(Net& model, const std::vector<const Image*>& samples,
                            const std::vector<CropFlip>& draws, int k_augment, double temperature,
                            int crop_pad) {
  if (k_augment < 1) throw std::runtime_error("augmentation count must be at least 1");
  if (draws.size() != samples.size() * static_cast<std::size_t>(k_augment))
    throw std::runtime_error("augmentation draw count does not match samples");
  if (samples.empty()) return nn::Mat<float>(model.class_count(), 0);

  std::vector<Image> variants;
  variants.reserve(draws.size());
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (int k = 0; k < k_augment; ++k)
      variants.push_back(
          apply_crop_flip(*samples[s], draws[s * static_cast<std::size_t>(k_augment) + k], crop_pad));
  std::vector<const Image*> ptrs;
  ptrs.reserve(variants.size());
  for (const auto& v : variants) ptrs.push_back(&v);

  const nn::Mat<float> logits = model.forward(assemble_input(ptrs), false);
  const nn::Mat<float> probs = softmax_columns(logits);
  nn::Mat<float> out(model.class_count(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    ProbVector mean = ProbVector::Zero(model.class_count());
    for (int k = 0; k < k_augment; ++k)
      mean += probs.col(static_cast<Eigen::Index>(s * static_cast<std::size_t>(k_augment) + k))
                  .cast<double>();
    mean /= static_cast<double>(k_augment);
    mean /= mean.sum();  // renormalize float rounding before sharpening
    out.col(static_cast<Eigen::Index>(s)) = sharpen(mean, temperature).cast<float>();
  }
  return out;
}

MixedBatch build_mixmatch_batch(Net& model, const std::vector<const Image*>& labeled,
                                const std::vector<int>& labels,
                                const std::vector<const Image*>& unlabeled,
                                const MixMatchConfig& cfg, const MixDraw& draw) {
  validate(cfg);
  if (labeled.empty()) throw std::runtime_error("labeled batch is empty (scheduling bug)");
  if (labels.size() != labeled.size()) throw std::runtime_error("labeled batch/label size mismatch");
  const int c_count = model.class_count();
  const std::size_t nl = labeled.size();
  const std::size_t nu = unlabeled.size();
  const std::size_t k = static_cast<std::size_t>(cfg.k_augment);
  if (draw.labeled_aug.size() != nl || draw.unlabeled_aug.size() != nu * k)
    throw std::runtime_error("mix randomness does not match batch sizes");
  const std::size_t total = nl + nu * k;
  if (draw.perm.size() != total || draw.lambda.size() != total)
    throw std::runtime_error("mix randomness does not match batch sizes");

  // Augmented entries and their soft targets, labeled first.
  std::vector<Image> entries;
  entries.reserve(total);
  nn::Mat<float> targets(c_count, static_cast<Eigen::Index>(total));
  targets.setZero();
  for (std::size_t i = 0; i < nl; ++i) {
    entries.push_back(apply_crop_flip(*labeled[i], draw.labeled_aug[i], cfg.crop_pad));
    if (labels[i] < 0 || labels[i] >= c_count) throw std::runtime_error("label outside class range");
    targets(labels[i], static_cast<Eigen::Index>(i)) = 1.0f;
  }
  if (nu > 0) {
    std::vector<Image> variants;
    variants.reserve(nu * k);
    for (std::size_t u = 0; u < nu; ++u)
      for (std::size_t kk = 0; kk < k; ++kk)
        variants.push_back(apply_crop_flip(*unlabeled[u], draw.unlabeled_aug[u * k + kk], cfg.crop_pad));

    // Guess soft labels from the augmented variants themselves (eval mode).
    std::vector<const Image*> vptrs;
    vptrs.reserve(variants.size());
    for (const auto& v : variants) vptrs.push_back(&v);
    const nn::Mat<float> logits = model.forward(assemble_input(vptrs), false);
    const nn::Mat<float> probs = softmax_columns(logits);
    for (std::size_t u = 0; u < nu; ++u) {
      ProbVector mean = ProbVector::Zero(c_count);
      for (std::size_t kk = 0; kk < k; ++kk)
        mean += probs.col(static_cast<Eigen::Index>(u * k + kk)).cast<double>();
      mean /= static_cast<double>(k);
      mean /= mean.sum();
      const nn::Mat<float> guess =
          sharpen(mean, cfg.temperature).cast<float>().matrix();
      for (std::size_t kk = 0; kk < k; ++kk)
        targets.col(static_cast<Eigen::Index>(nl + u * k + kk)) = guess;
    }
    for (auto& v : variants) entries.push_back(std::move(v));
  }

  // MixUp each entry with its shuffled partner.
  MixedBatch out;
  out.labeled_count = static_cast<Eigen::Index>(nl);
  out.unlabeled_count = static_cast<Eigen::Index>(nu * k);
  out.targets.resize(c_count, static_cast<Eigen::Index>(total));
  std::vector<Image> mixed;
  mixed.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t j = static_cast<std::size_t>(draw.perm[i]);
    const double lp = draw.lambda[i];
    mixed.push_back(mix_images(entries[i], entries[j], lp));
    out.targets.col(static_cast<Eigen::Index>(i)) =
        static_cast<float>(lp) * targets.col(static_cast<Eigen::Index>(i)) +
        static_cast<float>(1.0 - lp) * targets.col(static_cast<Eigen::Index>(j));
  }
  std::vector<const Image*> mptrs;
  mptrs.reserve(total);
  for (const auto& m : mixed) mptrs.push_back(&m);
  out.input = assemble_input(mptrs);
  return out;
}

namespace {

MixLoss mixmatch_loss_impl(Net& model, const MixedBatch& batch, const MixMatchConfig& cfg,
                           bool backward) {
  validate(cfg);
  if (batch.labeled_count < 1) throw std::runtime_error("mixed batch has no labeled entries");
  const Eigen::Index nl = batch.labeled_count;
  const Eigen::Index nu = batch.unlabeled_count;
  const Eigen::Index c_count = batch.targets.rows();

  const nn::Mat<float> logits = model.forward(batch.input, true);
  const nn::Mat<float> probs = softmax_columns(logits);

  MixLoss loss;
  for (Eigen::Index j = 0; j < nl; ++j) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < c_count; ++i) {
      const double t = batch.targets(i, j);
      if (t > 0.0) l -= t * std::log(std::max(static_cast<double>(probs(i, j)), 1e-12));
    }
    loss.supervised += l;
  }
  loss.supervised /= static_cast<double>(nl);

  if (nu > 0) {
    for (Eigen::Index j = nl; j < nl + nu; ++j)
      loss.unsupervised += (probs.col(j) - batch.targets.col(j)).squaredNorm();
    loss.unsupervised /= static_cast<double>(nu) * static_cast<double>(c_count);
  }
  loss.total = loss.supervised + cfg.lambda_u * loss.unsupervised;

  if (backward) {
    nn::Mat<float> dlogits(probs.rows(), probs.cols());
    const float inv_nl = 1.0f / static_cast<float>(nl);
    for (Eigen::Index j = 0; j < nl; ++j)
      dlogits.col(j) = (probs.col(j) - batch.targets.col(j)) * inv_nl;
    if (nu > 0) {
      const float scale =
          static_cast<float>(2.0 * cfg.lambda_u / (static_cast<double>(nu) * static_cast<double>(c_count)));
      for (Eigen::Index j = nl; j < nl + nu; ++j) {
        // d/dlogits of ||p - q||^2 through softmax: p ⊙ (g - <p, g>) with g = 2(p - q).
        const nn::Mat<float> g = scale * (probs.col(j) - batch.targets.col(j));
        const float dot = (probs.col(j).transpose() * g)(0, 0);
        dlogits.col(j) = probs.col(j).cwiseProduct(g) - probs.col(j) * dot;
      }
    }
    model.backward(dlogits);
  }
  return loss;
}

}  // namespace

MixLoss mixmatch_loss_and_backward(Net& model, const MixedBatch& batch, const MixMatchConfig& cfg) {
  return mixmatch_loss_impl(model, batch, cfg, true);
}

MixLoss mixmatch_loss(Net& model, const MixedBatch& batch, const MixMatchConfig& cfg) {
  return mixmatch_loss_impl(model, batch, cfg, false);
}

}  // namespace asd
