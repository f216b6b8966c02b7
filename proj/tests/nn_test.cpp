#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "asd/nn.hpp"
#include "asd/losses.hpp"
#include "asd/rng.hpp"
#include "doctest.h"

using namespace asd;
using DMat = nn::Mat<double>;
using DNet = nn::Network<double>;

namespace {

DMat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  DMat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * sample_normal(rng);
  return m;
}

/// Mean cross-entropy of softmax(logits) against labels.
double ce_from_logits(const DMat& logits, const std::vector<int>& labels) {
  const DMat p = softmax_columns(logits);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    loss -= std::log(p(labels[static_cast<std::size_t>(j)], j));
  return loss / static_cast<double>(logits.cols());
}

double net_loss(DNet& net, const DMat& x, const std::vector<int>& labels) {
  return ce_from_logits(net.forward(x, true), labels);
}

void net_backward(DNet& net, const DMat& x, const std::vector<int>& labels) {
  const DMat logits = net.forward(x, true);
  DMat dlogits = softmax_columns(logits);
  for (Eigen::Index j = 0; j < dlogits.cols(); ++j)
    dlogits(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  dlogits /= static_cast<double>(dlogits.cols());
  net.zero_grad();
  net.backward(dlogits);
}

/// Central finite differences over every parameter entry.
void check_all_grads(DNet& net, const DMat& x, const std::vector<int>& labels, double tol) {
  net_backward(net, x, labels);
  // copy analytic grads before finite differences reuse the buffers
  std::vector<DMat> analytic;
  auto groups = net.param_groups();
  for (auto& g : groups)
    for (auto& r : g.refs) analytic.push_back(*r.grad);

  const double h = 1e-6;
  std::size_t slot = 0;
  int checked = 0;
  for (auto& g : groups)
    for (auto& r : g.refs) {
      DMat& w = *r.value;
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double keep = w(i, j);
          w(i, j) = keep + h;
          const double up = net_loss(net, x, labels);
          w(i, j) = keep - h;
          const double dn = net_loss(net, x, labels);
          w(i, j) = keep;
          const double fd = (up - dn) / (2.0 * h);
          const double an = analytic[slot](i, j);
          const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
          REQUIRE_MESSAGE(std::abs(fd - an) / denom < tol,
                          g.label << " entry (" << i << "," << j << "): fd=" << fd
                                  << " analytic=" << an);
          ++checked;
        }
      ++slot;
    }
  CHECK(checked > 0);
}

}  // namespace

TEST_CASE("conv forward matches a naive loop") {
  const int in_ch = 2, out_ch = 3, k = 3, H = 5, W = 5, pad = 1, stride = 1, B = 2;
  auto conv = std::make_unique<nn::Conv2d<double>>("c", in_ch, out_ch, k, stride, pad, H, W);
  Rng rng = make_stream(1, "conv-oracle");
  conv->init_he(rng);

  std::vector<nn::ParamGroup<double>> groups;
  conv->collect_params(groups);
  const DMat& wmat = *groups[0].refs[0].value;
  const DMat& bias = *groups[0].refs[1].value;

  const DMat x = random_mat(in_ch, H * W * B, rng);
  const DMat y = conv->forward(x, true);
  REQUIRE(y.rows() == out_ch);
  REQUIRE(y.cols() == H * W * B);

  for (int b = 0; b < B; ++b)
    for (int co = 0; co < out_ch; ++co)
      for (int oy = 0; oy < H; ++oy)
        for (int ox = 0; ox < W; ++ox) {
          double acc = bias(co, 0);
          for (int ci = 0; ci < in_ch; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += wmat(co, (ci * k + ky) * k + kx) * x(ci, b * H * W + iy * W + ix);
              }
          CHECK(y(co, b * H * W + oy * W + ox) == doctest::Approx(acc).epsilon(1e-9));
        }
}

TEST_CASE("maxpool picks window maxima and routes gradients to them") {
  nn::MaxPool2<double> pool(1, 4, 4);
  DMat x(1, 16);
  for (int i = 0; i < 16; ++i) x(0, i) = i;  // max of each 2x2 window is bottom-right
  const DMat y = pool.forward(x, true);
  REQUIRE(y.cols() == 4);
  CHECK(y(0, 0) == 5);
  CHECK(y(0, 1) == 7);
  CHECK(y(0, 2) == 13);
  CHECK(y(0, 3) == 15);

  DMat dy(1, 4);
  dy << 1, 2, 3, 4;
  const DMat dx = pool.backward(dy);
  CHECK(dx(0, 5) == 1);
  CHECK(dx(0, 7) == 2);
  CHECK(dx(0, 13) == 3);
  CHECK(dx(0, 15) == 4);
  CHECK(dx.sum() == doctest::Approx(10.0));
}

TEST_CASE("global average pool and its backward") {
  nn::GlobalAvgPool<double> gap(2, 2, 2);  // 2 channels, 2x2 spatial
  DMat x(2, 8);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 10, 20, 30, 40, 50, 60, 70, 80;
  const DMat y = gap.forward(x, true);
  REQUIRE(y.rows() == 2);
  REQUIRE(y.cols() == 2);
  CHECK(y(0, 0) == doctest::Approx(2.5));
  CHECK(y(1, 1) == doctest::Approx(65.0));

  DMat dy(2, 2);
  dy << 4, 8, 12, 16;
  const DMat dx = gap.backward(dy);
  CHECK(dx(0, 0) == doctest::Approx(1.0));
  CHECK(dx(0, 4) == doctest::Approx(2.0));
  CHECK(dx(1, 3) == doctest::Approx(3.0));
  CHECK(dx(1, 7) == doctest::Approx(4.0));
}

TEST_CASE("batchnorm normalizes in train mode and uses running stats in eval") {
  nn::BatchNorm<double> bn("bn", 2);
  Rng rng = make_stream(2, "bn");
  const DMat x = random_mat(2, 64, rng, 3.0).array() + 1.5;

  const DMat y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    const double mean = y.row(c).mean();
    const double var = y.row(c).array().square().mean() - mean * mean;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  // after many train passes the running stats approach the batch stats,
  // so eval-mode output on the same batch approaches the normalized one
  for (int i = 0; i < 200; ++i) bn.forward(x, true);
  const DMat ye = bn.forward(x, false);
  for (int c = 0; c < 2; ++c) CHECK(std::abs(ye.row(c).mean()) < 1e-2);
}

TEST_CASE("softmax columns form simplexes and match the direct formula") {
  Rng rng = make_stream(3, "softmax");
  const DMat z = random_mat(5, 7, rng, 2.0);
  const DMat p = softmax_columns(z);
  for (Eigen::Index j = 0; j < 7; ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
    double denom = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) denom += std::exp(z(i, j));
    for (Eigen::Index i = 0; i < 5; ++i)
      CHECK(p(i, j) == doctest::Approx(std::exp(z(i, j)) / denom).epsilon(1e-9));
  }
}

TEST_CASE("gradients through a conv-bn-pool-dense stack match finite differences") {
  const int H = 8, W = 8, B = 3;
  auto root = std::make_unique<nn::Sequential<double>>();
  Rng rng = make_stream(4, "gradcheck");

  auto c1 = std::make_unique<nn::Conv2d<double>>("conv1", 2, 4, 3, 1, 1, H, W);
  c1->init_he(rng);
  root->add(std::move(c1));
  root->add(std::make_unique<nn::BatchNorm<double>>("bn1", 4));
  root->add(std::make_unique<nn::Relu<double>>());
  root->add(std::make_unique<nn::MaxPool2<double>>(4, H, W));
  auto c2 = std::make_unique<nn::Conv2d<double>>("conv2", 4, 5, 3, 1, 1, H / 2, W / 2);
  c2->init_he(rng);
  root->add(std::move(c2));
  root->add(std::make_unique<nn::Relu<double>>());
  root->add(std::make_unique<nn::GlobalAvgPool<double>>(5, H / 2, W / 2));
  auto fc = std::make_unique<nn::Dense<double>>("fc", 5, 4);
  fc->init_he(rng);
  root->add(std::move(fc));

  DNet net(std::move(root), 2, H, W, 4);
  const DMat x = random_mat(2, H * W * B, rng, 0.5);
  const std::vector<int> labels{0, 2, 3};
  check_all_grads(net, x, labels, 1e-4);
}

TEST_CASE("gradients through residual blocks match finite differences") {
  const int H = 4, W = 4, B = 2;
  Rng rng = make_stream(5, "resgrad");
  auto root = std::make_unique<nn::Sequential<double>>();

  // identity-skip block
  auto main1 = std::make_unique<nn::Sequential<double>>();
  auto m1c = std::make_unique<nn::Conv2d<double>>("b1conv", 3, 3, 3, 1, 1, H, W);
  m1c->init_he(rng);
  main1->add(std::move(m1c));
  main1->add(std::make_unique<nn::BatchNorm<double>>("b1bn", 3));
  root->add(std::make_unique<nn::ResidualBlock<double>>(std::move(main1), nullptr));

  // projection-skip block with stride 2
  auto main2 = std::make_unique<nn::Sequential<double>>();
  auto m2c = std::make_unique<nn::Conv2d<double>>("b2conv", 3, 6, 3, 2, 1, H, W);
  m2c->init_he(rng);
  main2->add(std::move(m2c));
  main2->add(std::make_unique<nn::BatchNorm<double>>("b2bn", 6));
  auto skip2 = std::make_unique<nn::Sequential<double>>();
  auto s2c = std::make_unique<nn::Conv2d<double>>("b2skip", 3, 6, 1, 2, 0, H, W);
  s2c->init_he(rng);
  skip2->add(std::move(s2c));
  skip2->add(std::make_unique<nn::BatchNorm<double>>("b2skipbn", 6));
  root->add(std::make_unique<nn::ResidualBlock<double>>(std::move(main2), std::move(skip2)));

  root->add(std::make_unique<nn::GlobalAvgPool<double>>(6, H / 2, W / 2));
  auto fc = std::make_unique<nn::Dense<double>>("fc", 6, 3);
  fc->init_he(rng);
  root->add(std::move(fc));

  DNet net(std::move(root), 3, H, W, 3);
  const DMat x = random_mat(3, H * W * B, rng, 0.5);
  const std::vector<int> labels{1, 2};
  check_all_grads(net, x, labels, 1e-4);
}

TEST_CASE("adam follows the reference update rule") {
  DMat w(2, 1), g(2, 1);
  w << 1.0, -2.0;
  g << 0.3, -0.1;
  nn::Adam<double> adam(0.01);
  std::vector<nn::ParamRef<double>> params{{&w, &g}};

  // independent reference implementation
  double m[2] = {0, 0}, v[2] = {0, 0};
  double ref[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.3, -0.1}, {-0.2, 0.4}, {0.05, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    g(0, 0) = grads[t - 1][0];
    g(1, 0) = grads[t - 1][1];
    adam.step(params);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(w(0, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(w(1, 0) == doctest::Approx(ref[1]).epsilon(1e-12));
  }
}

TEST_CASE("sgd with momentum follows the reference update rule") {
  DMat w(1, 1), g(1, 1);
  w << 5.0;
  nn::Sgd<double> sgd(0.1, 0.9);
  std::vector<nn::ParamRef<double>> params{{&w, &g}};

  double vel = 0.0, ref = 5.0;
  const double grads[3] = {1.0, -0.5, 0.25};
  for (int t = 0; t < 3; ++t) {
    g(0, 0) = grads[t];
    sgd.step(params);
    vel = 0.9 * vel - 0.1 * grads[t];
    ref += vel;
    CHECK(w(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("adam state serializes into an identical trajectory") {
  Rng rng = make_stream(6, "adamstate");
  DMat w1 = random_mat(3, 2, rng), g1 = random_mat(3, 2, rng);
  DMat w2 = w1, g2 = g1;
  nn::Adam<double> a(0.01), b(0.01);
  std::vector<nn::ParamRef<double>> pa{{&w1, &g1}}, pb{{&w2, &g2}};

  a.step(pa);
  a.step(pa);
  b.step(pb);
  b.step(pb);
  std::stringstream state;
  a.save_state(state);
  nn::Adam<double> c(0.01);
  c.load_state(state);

  const DMat g3 = random_mat(3, 2, rng);
  g1 = g3;
  g2 = g3;
  a.step(pa);
  c.step(pb);
  CHECK(w1 == w2);
}

TEST_CASE("network clone is equal but independent") {
  auto root = std::make_unique<nn::Sequential<double>>();
  Rng rng = make_stream(7, "clone");
  auto fc1 = std::make_unique<nn::Dense<double>>("fc1", 4, 8);
  fc1->init_he(rng);
  root->add(std::move(fc1));
  root->add(std::make_unique<nn::Relu<double>>());
  auto fc2 = std::make_unique<nn::Dense<double>>("fc2", 8, 3);
  fc2->init_he(rng);
  root->add(std::move(fc2));
  DNet net(std::move(root), 4, 1, 1, 3);

  auto copy = net.clone();
  const DMat x = random_mat(4, 5, rng);
  const DMat y_before = net.forward(x, false);
  CHECK(copy->forward(x, false) == y_before);

  // train the copy; the original must not move
  const std::vector<int> labels{0, 1, 2, 0, 1};
  net_backward(*copy, x, labels);
  nn::Adam<double> opt(0.05);
  opt.step(nn::flatten_groups(copy->param_groups()));
  CHECK(net.forward(x, false) == y_before);
  CHECK(copy->forward(x, false) != y_before);
}
