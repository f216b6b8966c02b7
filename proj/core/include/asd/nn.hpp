#pragma once

// Minimal CPU neural-network engine over Eigen.
//
// Batch layout: activations are matrices with one channel per row. Inside the
// convolutional stage a batch of B images of shape (C,H,W) is the C x (H*W*B)
// matrix whose column b*(H*W) + y*W + x holds pixel (y,x) of sample b. After
// global average pooling the layout becomes features x B. This keeps every
// layer a dense matrix op with no per-layer reshuffling.

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asd/rng.hpp"

namespace asd::nn {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
struct ParamRef {
  Mat<Scalar>* value = nullptr;
  Mat<Scalar>* grad = nullptr;
};

template <class Scalar>
struct ParamGroup {
  std::string label;
  std::vector<ParamRef<Scalar>> refs;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& r : refs) n += static_cast<std::size_t>(r.value->size());
    return n;
  }
};

template <class Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Mat<Scalar> forward(const Mat<Scalar>& x, bool train) = 0;
  virtual Mat<Scalar> backward(const Mat<Scalar>& dy) = 0;
  virtual void collect_params(std::vector<ParamGroup<Scalar>>& out) { (void)out; }
  /// Persistent non-trainable state (batch-norm running stats); checkpoints
  /// must carry these alongside parameters.
  virtual void collect_state(std::vector<Mat<Scalar>*>& out) { (void)out; }
  virtual std::unique_ptr<Layer<Scalar>> clone() const = 0;
};

template <class Scalar>
class Relu final : public Layer<Scalar> {
 public:
  Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
    mask_ = (x.array() > Scalar(0)).template cast<Scalar>().matrix();
    return x.cwiseMax(Scalar(0));
  }
  Mat<Scalar> backward(const Mat<Scalar>& dy) override { return dy.cwiseProduct(mask_); }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Relu>(); }

 private:
  Mat<Scalar> mask_;
};

template <class Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(std::string label, int in_ch, int out_ch, int kernel, int stride, int pad, int in_h,
         int in_w)
      : label_(std::move(label)),
        in_ch_(in_ch),
        out_ch_(out_ch),
        k_(kernel),
        stride_(stride),
        pad_(pad),
        in_h_(in_h),
        in_w_(in_w),
        out_h_((in_h + 2 * pad - kernel) / stride + 1),
        out_w_((in_w + 2 * pad - kernel) / stride + 1) {
    if (kernel < 1 || stride < 1 || pad < 0)
      throw std::runtime_error("conv geometry is invalid: " + label_);
    // Integer division floors, so partial windows past the right/bottom edge
    // are simply never emitted; only a window larger than the padded input is
    // unrepresentable.
    if (in_h + 2 * pad < kernel || in_w + 2 * pad < kernel)
      throw std::runtime_error("conv window exceeds the padded input: " + label_);
    w_ = Mat<Scalar>::Zero(out_ch_, in_ch_ * k_ * k_);
    b_ = Mat<Scalar>::Zero(out_ch_, 1);
    dw_ = Mat<Scalar>::Zero(w_.rows(), w_.cols());
    db_ = Mat<Scalar>::Zero(b_.rows(), 1);
  }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_ch_ * k_ * k_));
    for (Eigen::Index j = 0; j < w_.cols(); ++j)
      for (Eigen::Index i = 0; i < w_.rows(); ++i)
        w_(i, j) = static_cast<Scalar>(std * sample_normal(rng));
    b_.setZero();
  }

  int out_height() const { return out_h_; }
  int out_width() const { return out_w_; }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
    const int hw_in = in_h_ * in_w_;
    if (x.rows() != in_ch_ || x.cols() % hw_in != 0)
      throw std::runtime_error("conv input shape mismatch: " + label_);
    batch_ = static_cast<int>(x.cols()) / hw_in;
    cols_ = im2col(x, batch_);
    Mat<Scalar> y = w_ * cols_;
    y.colwise() += b_.col(0);
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    dw_.noalias() += dy * cols_.transpose();
    db_.col(0).noalias() += dy.rowwise().sum();
    Mat<Scalar> dcols = w_.transpose() * dy;
    return col2im(dcols, batch_);
  }

  void collect_params(std::vector<ParamGroup<Scalar>>& out) override {
    out.push_back({label_, {{&w_, &dw_}, {&b_, &db_}}});
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    auto c = std::make_unique<Conv2d>(label_, in_ch_, out_ch_, k_, stride_, pad_, in_h_, in_w_);
    c->w_ = w_;
    c->b_ = b_;
    return c;
  }

 private:
  Mat<Scalar> im2col(const Mat<Scalar>& x, int batch) const {
    const int hw_out = out_h_ * out_w_;
    Mat<Scalar> cols(in_ch_ * k_ * k_, hw_out * batch);
    for (int b = 0; b < batch; ++b) {
      const int in_base = b * in_h_ * in_w_;
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * hw_out + oy * out_w_ + ox;
          Eigen::Index row = 0;
          for (int ci = 0; ci < in_ch_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              for (int kx = 0; kx < k_; ++kx, ++row) {
                const int ix = ox * stride_ - pad_ + kx;
                cols(row, col) = (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_)
                                     ? x(ci, in_base + iy * in_w_ + ix)
                                     : Scalar(0);
              }
            }
          }
        }
      }
    }
    return cols;
  }

  Mat<Scalar> col2im(const Mat<Scalar>& dcols, int batch) const {
    const int hw_out = out_h_ * out_w_;
    Mat<Scalar> dx = Mat<Scalar>::Zero(in_ch_, static_cast<Eigen::Index>(in_h_) * in_w_ * batch);
    for (int b = 0; b < batch; ++b) {
      const int in_base = b * in_h_ * in_w_;
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * hw_out + oy * out_w_ + ox;
          Eigen::Index row = 0;
          for (int ci = 0; ci < in_ch_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              for (int kx = 0; kx < k_; ++kx, ++row) {
                const int ix = ox * stride_ - pad_ + kx;
                if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_)
                  dx(ci, in_base + iy * in_w_ + ix) += dcols(row, col);
              }
            }
          }
        }
      }
    }
    return dx;
  }

  std::string label_;
  int in_ch_, out_ch_, k_, stride_, pad_, in_h_, in_w_, out_h_, out_w_;
  int batch_ = 0;
  Mat<Scalar> w_, b_, dw_, db_;
  Mat<Scalar> cols_;
};

template <class Scalar>
class MaxPool2 final : public Layer<Scalar> {
 public:
  MaxPool2(int channels, int in_h, int in_w) : ch_(channels), in_h_(in_h), in_w_(in_w) {
    if (in_h % 2 != 0 || in_w % 2 != 0) throw std::runtime_error("maxpool needs even input size");
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
    const int hw_in = in_h_ * in_w_;
    batch_ = static_cast<int>(x.cols()) / hw_in;
    const int oh = in_h_ / 2, ow = in_w_ / 2;
    Mat<Scalar> y(ch_, static_cast<Eigen::Index>(oh) * ow * batch_);
    arg_.resize(ch_, y.cols());
    for (int b = 0; b < batch_; ++b) {
      const int in_base = b * hw_in;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * oh * ow + oy * ow + ox;
          const int i00 = in_base + (2 * oy) * in_w_ + 2 * ox;
          const int idx[4] = {i00, i00 + 1, i00 + in_w_, i00 + in_w_ + 1};
          for (int c = 0; c < ch_; ++c) {
            int best = 0;
            Scalar v = x(c, idx[0]);
            for (int t = 1; t < 4; ++t)
              if (x(c, idx[t]) > v) {
                v = x(c, idx[t]);
                best = t;
              }
            y(c, col) = v;
            arg_(c, col) = static_cast<std::uint8_t>(best);
          }
        }
      }
    }
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    const int oh = in_h_ / 2, ow = in_w_ / 2;
    Mat<Scalar> dx = Mat<Scalar>::Zero(ch_, static_cast<Eigen::Index>(in_h_) * in_w_ * batch_);
    for (int b = 0; b < batch_; ++b) {
      const int in_base = b * in_h_ * in_w_;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * oh * ow + oy * ow + ox;
          const int i00 = in_base + (2 * oy) * in_w_ + 2 * ox;
          const int idx[4] = {i00, i00 + 1, i00 + in_w_, i00 + in_w_ + 1};
          for (int c = 0; c < ch_; ++c) dx(c, idx[arg_(c, col)]) += dy(c, col);
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<MaxPool2>(ch_, in_h_, in_w_);
  }

 private:
  int ch_, in_h_, in_w_;
  int batch_ = 0;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> arg_;
};

template <class Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  GlobalAvgPool(int channels, int in_h, int in_w) : ch_(channels), hw_(in_h * in_w) {}

  Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
    batch_ = static_cast<int>(x.cols()) / hw_;
    Mat<Scalar> y(ch_, batch_);
    for (int b = 0; b < batch_; ++b)
      y.col(b) = x.middleCols(static_cast<Eigen::Index>(b) * hw_, hw_).rowwise().mean();
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    Mat<Scalar> dx(ch_, static_cast<Eigen::Index>(hw_) * batch_);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(hw_);
    for (int b = 0; b < batch_; ++b)
      dx.middleCols(static_cast<Eigen::Index>(b) * hw_, hw_) = (dy.col(b) * inv).replicate(1, hw_);
    return dx;
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<GlobalAvgPool>(ch_, hw_, 1);
  }

 private:
  int ch_, hw_;
  int batch_ = 0;
};

template <class Scalar>
class Dense final : public Layer<Scalar> {
 public:
  Dense(std::string label, int in_features, int out_features)
      : label_(std::move(label)), in_(in_features), out_(out_features) {
    w_ = Mat<Scalar>::Zero(out_, in_);
    b_ = Mat<Scalar>::Zero(out_, 1);
    dw_ = Mat<Scalar>::Zero(out_, in_);
    db_ = Mat<Scalar>::Zero(out_, 1);
  }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_));
    for (Eigen::Index j = 0; j < w_.cols(); ++j)
      for (Eigen::Index i = 0; i < w_.rows(); ++i)
        w_(i, j) = static_cast<Scalar>(std * sample_normal(rng));
    b_.setZero();
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
    x_ = x;
    Mat<Scalar> y = w_ * x;
    y.colwise() += b_.col(0);
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    dw_.noalias() += dy * x_.transpose();
    db_.col(0).noalias() += dy.rowwise().sum();
    return w_.transpose() * dy;
  }

  void collect_params(std::vector<ParamGroup<Scalar>>& out) override {
    out.push_back({label_, {{&w_, &dw_}, {&b_, &db_}}});
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    auto c = std::make_unique<Dense>(label_, in_, out_);
    c->w_ = w_;
    c->b_ = b_;
    return c;
  }

 private:
  std::string label_;
  int in_, out_;
  Mat<Scalar> w_, b_, dw_, db_;
  Mat<Scalar> x_;
};

/// Per-channel batch normalization over all columns (spatial positions and
/// batch entries alike in the conv layout).
template <class Scalar>
class BatchNorm final : public Layer<Scalar> {
 public:
  BatchNorm(std::string label, int channels, double momentum = 0.1, double eps = 1e-5)
      : label_(std::move(label)), ch_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = Mat<Scalar>::Ones(ch_, 1);
    beta_ = Mat<Scalar>::Zero(ch_, 1);
    dgamma_ = Mat<Scalar>::Zero(ch_, 1);
    dbeta_ = Mat<Scalar>::Zero(ch_, 1);
    running_mean_ = Mat<Scalar>::Zero(ch_, 1);
    running_var_ = Mat<Scalar>::Ones(ch_, 1);
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool train) override {
    if (train) {
      Mat<Scalar> mean = x.rowwise().mean();
      Mat<Scalar> centered = x.colwise() - mean.col(0);
      Mat<Scalar> var = centered.array().square().matrix().rowwise().mean();
      inv_std_ = (var.array() + static_cast<Scalar>(eps_)).rsqrt().matrix();
      xhat_ = (centered.array().colwise() * inv_std_.col(0).array()).matrix();
      running_mean_ = static_cast<Scalar>(1.0 - momentum_) * running_mean_ +
                      static_cast<Scalar>(momentum_) * mean;
      running_var_ = static_cast<Scalar>(1.0 - momentum_) * running_var_ +
                     static_cast<Scalar>(momentum_) * var;
      Mat<Scalar> y = (xhat_.array().colwise() * gamma_.col(0).array()).matrix();
      y.colwise() += beta_.col(0);
      return y;
    }
    Mat<Scalar> inv = (running_var_.array() + static_cast<Scalar>(eps_)).rsqrt().matrix();
    Mat<Scalar> y = ((x.colwise() - running_mean_.col(0)).array().colwise() *
                     (gamma_.col(0).array() * inv.col(0).array()))
                        .matrix();
    y.colwise() += beta_.col(0);
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    const Scalar m = static_cast<Scalar>(dy.cols());
    dgamma_.col(0).noalias() += dy.cwiseProduct(xhat_).rowwise().sum();
    dbeta_.col(0).noalias() += dy.rowwise().sum();
    Mat<Scalar> dxhat = (dy.array().colwise() * gamma_.col(0).array()).matrix();
    Mat<Scalar> sum_dxhat = dxhat.rowwise().sum();
    Mat<Scalar> sum_dxhat_xhat = dxhat.cwiseProduct(xhat_).rowwise().sum();
    Mat<Scalar> dx = (dxhat * m).colwise() - sum_dxhat.col(0);
    dx.array() -= xhat_.array().colwise() * sum_dxhat_xhat.col(0).array();
    dx = (dx.array().colwise() * (inv_std_.col(0).array() / m)).matrix();
    return dx;
  }

  void collect_params(std::vector<ParamGroup<Scalar>>& out) override {
    out.push_back({label_, {{&gamma_, &dgamma_}, {&beta_, &dbeta_}}});
  }

  void collect_state(std::vector<Mat<Scalar>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    auto c = std::make_unique<BatchNorm>(label_, ch_, momentum_, eps_);
    c->gamma_ = gamma_;
    c->beta_ = beta_;
    c->running_mean_ = running_mean_;
    c->running_var_ = running_var_;
    return c;
  }

  // Running statistics are state, not parameters; checkpoints must carry them.
  Mat<Scalar>& running_mean() { return running_mean_; }
  Mat<Scalar>& running_var() { return running_var_; }

 private:
  std::string label_;
  int ch_;
  double momentum_, eps_;
  Mat<Scalar> gamma_, beta_, dgamma_, dbeta_;
  Mat<Scalar> running_mean_, running_var_;
  Mat<Scalar> xhat_, inv_std_;
};

template <class Scalar>
class Sequential final : public Layer<Scalar> {
 public:
  Sequential() = default;

  void add(std::unique_ptr<Layer<Scalar>> layer) { layers_.push_back(std::move(layer)); }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<Scalar>* layer(std::size_t i) { return layers_[i].get(); }

  Mat<Scalar> forward(const Mat<Scalar>& x, bool train) override {
    Mat<Scalar> h = x;
    for (auto& l : layers_) h = l->forward(h, train);
    return h;
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    Mat<Scalar> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_params(std::vector<ParamGroup<Scalar>>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }

  void collect_state(std::vector<Mat<Scalar>*>& out) override {
    for (auto& l : layers_) l->collect_state(out);
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    auto c = std::make_unique<Sequential>();
    for (const auto& l : layers_) c->add(l->clone());
    return c;
  }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// y = relu(main(x) + skip(x)); skip is identity when empty.
template <class Scalar>
class ResidualBlock final : public Layer<Scalar> {
 public:
  ResidualBlock(std::unique_ptr<Sequential<Scalar>> main, std::unique_ptr<Sequential<Scalar>> skip)
      : main_(std::move(main)), skip_(std::move(skip)) {}

  Mat<Scalar> forward(const Mat<Scalar>& x, bool train) override {
    Mat<Scalar> m = main_->forward(x, train);
    Mat<Scalar> s = skip_ ? skip_->forward(x, train) : x;
    Mat<Scalar> sum = m + s;
    mask_ = (sum.array() > Scalar(0)).template cast<Scalar>();
    return sum.cwiseMax(Scalar(0));
  }

  Mat<Scalar> backward(const Mat<Scalar>& dy) override {
    Mat<Scalar> g = dy.cwiseProduct(mask_);
    Mat<Scalar> dx_main = main_->backward(g);
    Mat<Scalar> dx_skip = skip_ ? skip_->backward(g) : g;
    return dx_main + dx_skip;
  }

  void collect_params(std::vector<ParamGroup<Scalar>>& out) override {
    main_->collect_params(out);
    if (skip_) skip_->collect_params(out);
  }

  void collect_state(std::vector<Mat<Scalar>*>& out) override {
    main_->collect_state(out);
    if (skip_) skip_->collect_state(out);
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    auto main_clone = std::unique_ptr<Sequential<Scalar>>(
        static_cast<Sequential<Scalar>*>(main_->clone().release()));
    std::unique_ptr<Sequential<Scalar>> skip_clone;
    if (skip_)
      skip_clone = std::unique_ptr<Sequential<Scalar>>(
          static_cast<Sequential<Scalar>*>(skip_->clone().release()));
    return std::make_unique<ResidualBlock>(std::move(main_clone), std::move(skip_clone));
  }

 private:
  std::unique_ptr<Sequential<Scalar>> main_;
  std::unique_ptr<Sequential<Scalar>> skip_;
  Mat<Scalar> mask_;
};

template <class Scalar>
class Network {
 public:
  Network(std::unique_ptr<Sequential<Scalar>> root, int input_channels, int input_h, int input_w,
          int class_count)
      : root_(std::move(root)),
        in_ch_(input_channels),
        in_h_(input_h),
        in_w_(input_w),
        classes_(class_count) {}

  int input_channels() const { return in_ch_; }
  int input_height() const { return in_h_; }
  int input_width() const { return in_w_; }
  int class_count() const { return classes_; }

  /// x: input_channels x (H*W*B); returns logits class_count x B.
  Mat<Scalar> forward(const Mat<Scalar>& x, bool train) { return root_->forward(x, train); }
  Mat<Scalar> backward(const Mat<Scalar>& dlogits) { return root_->backward(dlogits); }

  std::vector<ParamGroup<Scalar>> param_groups() {
    std::vector<ParamGroup<Scalar>> out;
    root_->collect_params(out);
    return out;
  }

  std::vector<Mat<Scalar>*> state_mats() {
    std::vector<Mat<Scalar>*> out;
    root_->collect_state(out);
    return out;
  }

  void zero_grad() {
    for (auto& g : param_groups())
      for (auto& r : g.refs) r.grad->setZero();
  }

  std::unique_ptr<Network<Scalar>> clone() const {
    auto root_clone = std::unique_ptr<Sequential<Scalar>>(
        static_cast<Sequential<Scalar>*>(root_->clone().release()));
    return std::make_unique<Network<Scalar>>(std::move(root_clone), in_ch_, in_h_, in_w_, classes_);
  }

  std::uint64_t param_count() {
    std::uint64_t n = 0;
    for (auto& g : param_groups()) n += g.count();
    return n;
  }

  Sequential<Scalar>& root() { return *root_; }

 private:
  std::unique_ptr<Sequential<Scalar>> root_;
  int in_ch_, in_h_, in_w_, classes_;
};

template <class Scalar>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<ParamRef<Scalar>>& params) = 0;
  virtual void save_state(std::ostream& out) const = 0;
  virtual void load_state(std::istream& in) = 0;
};

template <class Scalar>
class Sgd final : public Optimizer<Scalar> {
 public:
  Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<ParamRef<Scalar>>& params) override {
    if (momentum_ == 0.0) {
      for (const auto& p : params) *p.value -= static_cast<Scalar>(lr_) * *p.grad;
      return;
    }
    if (vel_.empty())
      for (const auto& p : params) vel_.push_back(Mat<Scalar>::Zero(p.value->rows(), p.value->cols()));
    if (vel_.size() != params.size()) throw std::runtime_error("optimizer state size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      vel_[i] = static_cast<Scalar>(momentum_) * vel_[i] - static_cast<Scalar>(lr_) * *params[i].grad;
      *params[i].value += vel_[i];
    }
  }

  void save_state(std::ostream& out) const override { write_mats(out, vel_); }
  void load_state(std::istream& in) override { read_mats(in, vel_); }

 private:
  static void write_mats(std::ostream& out, const std::vector<Mat<Scalar>>& mats) {
    const std::uint64_t n = mats.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& m : mats) {
      const std::uint64_t r = static_cast<std::uint64_t>(m.rows()), c = static_cast<std::uint64_t>(m.cols());
      out.write(reinterpret_cast<const char*>(&r), sizeof(r));
      out.write(reinterpret_cast<const char*>(&c), sizeof(c));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
    }
  }
  static void read_mats(std::istream& in, std::vector<Mat<Scalar>>& mats) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    mats.assign(n, Mat<Scalar>());
    for (auto& m : mats) {
      std::uint64_t r = 0, c = 0;
      in.read(reinterpret_cast<char*>(&r), sizeof(r));
      in.read(reinterpret_cast<char*>(&c), sizeof(c));
      m.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
    }
    if (!in) throw std::runtime_error("truncated optimizer state");
  }

  double lr_, momentum_;
  std::vector<Mat<Scalar>> vel_;

  template <class S>
  friend class Adam;
};

template <class Scalar>
class Adam final : public Optimizer<Scalar> {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef<Scalar>>& params) override {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Mat<Scalar>::Zero(p.value->rows(), p.value->cols()));
        v_.push_back(Mat<Scalar>::Zero(p.value->rows(), p.value->cols()));
      }
    }
    if (m_.size() != params.size()) throw std::runtime_error("optimizer state size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat<Scalar>& g = *params[i].grad;
      m_[i] = static_cast<Scalar>(beta1_) * m_[i] + static_cast<Scalar>(1.0 - beta1_) * g;
      v_[i] = static_cast<Scalar>(beta2_) * v_[i] +
              static_cast<Scalar>(1.0 - beta2_) * g.cwiseProduct(g);
      const Mat<Scalar> mhat = m_[i] / static_cast<Scalar>(bc1);
      const Mat<Scalar> vhat = v_[i] / static_cast<Scalar>(bc2);
      params[i].value->array() -=
          static_cast<Scalar>(lr_) * mhat.array() / (vhat.array().sqrt() + static_cast<Scalar>(eps_));
    }
  }

  void save_state(std::ostream& out) const override {
    out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    Sgd<Scalar>::write_mats(out, m_);
    Sgd<Scalar>::write_mats(out, v_);
  }
  void load_state(std::istream& in) override {
    in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    Sgd<Scalar>::read_mats(in, m_);
    Sgd<Scalar>::read_mats(in, v_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Mat<Scalar>> m_, v_;
};

/// Flatten all parameter refs of the given groups into one step list.
template <class Scalar>
std::vector<ParamRef<Scalar>> flatten_groups(const std::vector<ParamGroup<Scalar>>& groups) {
  std::vector<ParamRef<Scalar>> out;
  for (const auto& g : groups)
    for (const auto& r : g.refs) out.push_back(r);
  return out;
}

}  // namespace asd::nn
