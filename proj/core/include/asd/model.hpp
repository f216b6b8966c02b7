#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/nn.hpp"

namespace asd {

using Net = nn::Network<float>;

struct ModelSpec {
  std::string arch = "small-cnn";  // small-cnn | resnet18-like
  int class_count = 10;
  int input_channels = 3;
  int input_height = 32;
  int input_width = 32;
  int base_width = 32;
};

/// Which parameter groups the virtual model may update.
struct ParameterPartition {
  std::string kind = "last3";  // last3 | half-extractor | all

  /// Selected group indices out of `group_count` groups (ascending).
  std::vector<std::size_t> select(std::size_t group_count) const;
};

/// Deterministic He-initialized network; throws on unknown architecture.
template <class Scalar>
std::unique_ptr<nn::Network<Scalar>> build_model_as(const ModelSpec& spec, std::uint64_t rng_seed);

std::unique_ptr<Net> build_model(const ModelSpec& spec, std::uint64_t rng_seed);

struct VirtualModel {
  std::unique_ptr<Net> net;
  std::vector<nn::ParamRef<float>> trainable;  // partition-selected refs into net
};

VirtualModel clone_virtual_model(Net& model, const ParameterPartition& partition);

/// Stack images into the network input layout (channels x H*W*B) and map
/// pixel range [0,1] to [-1,1].
nn::Mat<float> assemble_input(const std::vector<const Image*>& images);

void save_params(Net& net, std::ostream& out);
void load_params(Net& net, std::istream& in);

/// Order-stable digest of all parameters and state (for untouched-model checks).
std::uint64_t param_digest(Net& net);

// ---- implementation of the templated builder ----

namespace detail {

template <class Scalar>
void add_conv_block(nn::Sequential<Scalar>& root, const std::string& label, int in_ch, int out_ch,
                    int& h, int& w, Rng& rng) {
  auto conv = std::make_unique<nn::Conv2d<Scalar>>(label, in_ch, out_ch, 3, 1, 1, h, w);
  conv->init_he(rng);
  root.add(std::move(conv));
  root.add(std::make_unique<nn::Relu<Scalar>>());
  root.add(std::make_unique<nn::MaxPool2<Scalar>>(out_ch, h, w));
  h /= 2;
  w /= 2;
}

template <class Scalar>
std::unique_ptr<nn::Sequential<Scalar>> make_residual_path(const std::string& label, int in_ch,
                                                           int out_ch, int stride, int& h, int& w,
                                                           Rng& rng) {
  auto path = std::make_unique<nn::Sequential<Scalar>>();
  auto c1 = std::make_unique<nn::Conv2d<Scalar>>(label + ".conv1", in_ch, out_ch, 3, stride, 1, h, w);
  c1->init_he(rng);
  const int oh = c1->out_height(), ow = c1->out_width();
  path->add(std::move(c1));
  path->add(std::make_unique<nn::BatchNorm<Scalar>>(label + ".bn1", out_ch));
  path->add(std::make_unique<nn::Relu<Scalar>>());
  auto c2 = std::make_unique<nn::Conv2d<Scalar>>(label + ".conv2", out_ch, out_ch, 3, 1, 1, oh, ow);
  c2->init_he(rng);
  path->add(std::move(c2));
  path->add(std::make_unique<nn::BatchNorm<Scalar>>(label + ".bn2", out_ch));
  h = oh;
  w = ow;
  return path;
}

}  // namespace detail

template <class Scalar>
std::unique_ptr<nn::Network<Scalar>> build_model_as(const ModelSpec& spec, std::uint64_t rng_seed) {
  if (spec.class_count < 2) throw std::runtime_error("model needs at least two classes");
  Rng rng = make_stream(rng_seed, "model-init");
  auto root = std::make_unique<nn::Sequential<Scalar>>();
  int h = spec.input_height, w = spec.input_width;

  if (spec.arch == "small-cnn") {
    const int widths[5] = {spec.input_channels, spec.base_width, 2 * spec.base_width,
                           4 * spec.base_width, 6 * spec.base_width};
    for (int i = 0; i < 4; ++i)
      detail::add_conv_block<Scalar>(*root, "conv" + std::to_string(i + 1), widths[i], widths[i + 1],
                                     h, w, rng);
    root->add(std::make_unique<nn::GlobalAvgPool<Scalar>>(widths[4], h, w));
    auto fc = std::make_unique<nn::Dense<Scalar>>("fc", widths[4], spec.class_count);
    fc->init_he(rng);
    root->add(std::move(fc));
  } else if (spec.arch == "resnet18-like") {
    const int bw = spec.base_width;
    auto stem = std::make_unique<nn::Conv2d<Scalar>>("stem.conv", spec.input_channels, bw, 3, 1, 1, h, w);
    stem->init_he(rng);
    root->add(std::move(stem));
    root->add(std::make_unique<nn::BatchNorm<Scalar>>("stem.bn", bw));
    root->add(std::make_unique<nn::Relu<Scalar>>());

    int in_ch = bw;
    const int stage_ch[4] = {bw, 2 * bw, 4 * bw, 8 * bw};
    const int stage_stride[4] = {1, 2, 2, 2};
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < 2; ++b) {
        const int stride = b == 0 ? stage_stride[s] : 1;
        const int out_ch = stage_ch[s];
        const std::string label = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        int ph = h, pw = w;
        auto main = detail::make_residual_path<Scalar>(label, in_ch, out_ch, stride, ph, pw, rng);
        std::unique_ptr<nn::Sequential<Scalar>> skip;
        if (stride != 1 || in_ch != out_ch) {
          skip = std::make_unique<nn::Sequential<Scalar>>();
          auto proj = std::make_unique<nn::Conv2d<Scalar>>(label + ".proj", in_ch, out_ch, 1, stride, 0, h, w);
          proj->init_he(rng);
          skip->add(std::move(proj));
          skip->add(std::make_unique<nn::BatchNorm<Scalar>>(label + ".proj_bn", out_ch));
        }
        root->add(std::make_unique<nn::ResidualBlock<Scalar>>(std::move(main), std::move(skip)));
        h = ph;
        w = pw;
        in_ch = out_ch;
      }
    }
    root->add(std::make_unique<nn::GlobalAvgPool<Scalar>>(in_ch, h, w));
    auto fc = std::make_unique<nn::Dense<Scalar>>("fc", in_ch, spec.class_count);
    fc->init_he(rng);
    root->add(std::move(fc));
  } else {
    throw std::runtime_error("unsupported architecture: " + spec.arch);
  }

  return std::make_unique<nn::Network<Scalar>>(std::move(root), spec.input_channels,
                                               spec.input_height, spec.input_width,
                                               spec.class_count);
}

}  // namespace asd
