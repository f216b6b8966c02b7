#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "asd/augment.hpp"
#include "asd/dataset.hpp"
#include "asd/model.hpp"
#include "asd/poison.hpp"

namespace asd {

using ProbVector = Eigen::VectorXd;

/// Throws unless entries are >= 0 and sum to 1 within 1e-6.
void check_simplex(const ProbVector& p);

struct SceParams {
  double alpha = 0.1;
  double beta = 1.0;
  double floor = 1e-4;  // probability clamp for the log terms
};

double cross_entropy(const ProbVector& pred, int label, double floor = 1e-4);
ProbVector cross_entropy_grad(const ProbVector& pred, int label, double floor = 1e-4);

double reverse_cross_entropy(const ProbVector& pred, int label, double floor = 1e-4);
double symmetric_cross_entropy(const ProbVector& pred, int label, const SceParams& params = {});
ProbVector symmetric_cross_entropy_grad(const ProbVector& pred, int label, const SceParams& params = {});

/// p_j^(1/T), renormalized.
ProbVector sharpen(const ProbVector& p, double temperature);

/// Column-wise stable softmax.
template <class Scalar>
nn::Mat<Scalar> softmax_columns(const nn::Mat<Scalar>& logits) {
  nn::Mat<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Scalar mx = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - mx).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

enum class LossKind { ce, sce, reduction };

std::string loss_kind_name(LossKind kind);

struct PerSampleLosses {
  LossKind kind = LossKind::sce;
  std::vector<double> values;  // aligned to dataset indices

  std::size_t size() const { return values.size(); }
};

/// Inference-mode, augmentation-free losses against assigned labels.
PerSampleLosses per_sample_losses(Net& model, const PoisonedDataset& dataset, LossKind kind,
                                  int batch_size = 256);

struct MixMatchConfig {
  double temperature = 0.5;
  double lambda_u = 15.0;
  double alpha_mix = 0.75;
  int k_augment = 2;
  int batch_size = 64;
  int crop_pad = 4;
};

void validate(const MixMatchConfig& cfg);

/// All randomness one semi-supervised step consumes, drawn up front in a fixed
/// order: labeled augmentations, unlabeled augmentations (k-major per sample),
/// the shuffle permutation over labeled+unlabeled entries, then one mixup
/// lambda per entry (already folded to max(lambda, 1-lambda)).
struct MixDraw {
  std::vector<CropFlip> labeled_aug;
  std::vector<CropFlip> unlabeled_aug;
  std::vector<int> perm;
  std::vector<double> lambda;
};

MixDraw draw_mixmatch_randomness(Rng& rng, int n_labeled, int n_unlabeled, const MixMatchConfig& cfg);

/// lp is assumed in [0.5, 1]; images must share shape.
Image mix_images(const Image& a, const Image& b, double lp);

/// Average of eval-mode predictions over each sample's k augmented variants,
/// sharpened; one column per sample. draws holds k entries per sample.
nn::Mat<float> guess_labels(Net& model, const std::vector<const Image*>& samples,
                            const std::vector<CropFlip>& draws, int k_augment, double temperature,
                            int crop_pad);

/// Mixed training batch: labeled columns first, then unlabeled, one forward
/// pass for both. Unlabeled entries carry guessed soft targets; their dataset
/// labels are never part of this structure.
struct MixedBatch {
  nn::Mat<float> input;    // channels x (H*W*(labeled+unlabeled))
  nn::Mat<float> targets;  // class_count x (labeled+unlabeled)
  Eigen::Index labeled_count = 0;
  Eigen::Index unlabeled_count = 0;
};

MixedBatch build_mixmatch_batch(Net& model, const std::vector<const Image*>& labeled,
                                const std::vector<int>& labels,
                                const std::vector<const Image*>& unlabeled,
                                const MixMatchConfig& cfg, const MixDraw& draw);

struct MixLoss {
  double supervised = 0.0;    // mean soft-label cross-entropy over mixed labeled entries
  double unsupervised = 0.0;  // mean per-class squared error over mixed unlabeled entries
  double total = 0.0;         // supervised + lambda_u * unsupervised
};

/// Forward in train mode, compute both loss terms, and backpropagate their
/// gradient into the model's parameter grads (caller steps the optimizer).
MixLoss mixmatch_loss_and_backward(Net& model, const MixedBatch& batch, const MixMatchConfig& cfg);

/// Loss-only evaluation of the same objective (no backward, no grad writes).
MixLoss mixmatch_loss(Net& model, const MixedBatch& batch, const MixMatchConfig& cfg);

}  // namespace asd
