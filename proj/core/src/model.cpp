#include "asd/model.hpp"

#include <stdexcept>

namespace asd {

std::vector<std::size_t> ParameterPartition::select(std::size_t group_count) const {
  if (group_count == 0) throw std::runtime_error("model has no parameter groups");
  std::vector<std::size_t> out;
  if (kind == "all") {
    for (std::size_t i = 0; i < group_count; ++i) out.push_back(i);
  } else if (kind == "last3") {
    const std::size_t take = group_count < 3 ? group_count : 3;
    for (std::size_t i = group_count - take; i < group_count; ++i) out.push_back(i);
  } else if (kind == "half-extractor") {
    // Latter half of the feature-extractor groups plus the classifier head.
    const std::size_t extractor = group_count - 1;
    const std::size_t start = extractor - extractor / 2;
    for (std::size_t i = start; i < group_count; ++i) out.push_back(i);
  } else {
    throw std::runtime_error("unknown parameter partition: " + kind);
  }
  if (out.empty()) throw std::runtime_error("parameter partition selected nothing");
  return out;
}

std::unique_ptr<Net> build_model(const ModelSpec& spec, std::uint64_t rng_seed) {
  return build_model_as<float>(spec, rng_seed);
}

VirtualModel clone_virtual_model(Net& model, const ParameterPartition& partition) {
  VirtualModel vm;
  vm.net = model.clone();
  auto groups = vm.net->param_groups();
  for (std::size_t gi : partition.select(groups.size()))
    for (const auto& r : groups[gi].refs) vm.trainable.push_back(r);
  return vm;
}

nn::Mat<float> assemble_input(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::runtime_error("cannot assemble an empty batch");
  const Image& first = *images.front();
  const int hw = first.height * first.width;
  nn::Mat<float> x(first.channels, static_cast<Eigen::Index>(hw) * static_cast<Eigen::Index>(images.size()));
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = *images[b];
    if (!img.same_shape(first)) throw std::runtime_error("mixed image shapes in batch");
    for (int c = 0; c < img.channels; ++c)
      for (int p = 0; p < hw; ++p)
        x(c, static_cast<Eigen::Index>(b) * hw + p) = 2.0f * img.data[static_cast<std::size_t>(c * hw + p)] - 1.0f;
  }
  return x;
}

void save_params(Net& net, std::ostream& out) {
  auto write_mat = [&out](const nn::Mat<float>& m) {
    const std::uint64_t r = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t c = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&r), sizeof(r));
    out.write(reinterpret_cast<const char*>(&c), sizeof(c));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
  };
  const auto groups = net.param_groups();
  const std::uint64_t ng = groups.size();
  out.write(reinterpret_cast<const char*>(&ng), sizeof(ng));
  for (const auto& g : groups)
    for (const auto& r : g.refs) write_mat(*r.value);
  const auto state = net.state_mats();
  const std::uint64_t ns = state.size();
  out.write(reinterpret_cast<const char*>(&ns), sizeof(ns));
  for (const auto* m : state) write_mat(*m);
  if (!out) throw std::runtime_error("short write while saving parameters");
}

void load_params(Net& net, std::istream& in) {
  auto read_mat = [&in](nn::Mat<float>& m) {
    std::uint64_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), sizeof(r));
    in.read(reinterpret_cast<char*>(&c), sizeof(c));
    if (!in || static_cast<Eigen::Index>(r) != m.rows() || static_cast<Eigen::Index>(c) != m.cols())
      throw std::runtime_error("parameter shape mismatch while loading");
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
  };
  auto groups = net.param_groups();
  std::uint64_t ng = 0;
  in.read(reinterpret_cast<char*>(&ng), sizeof(ng));
  if (ng != groups.size()) throw std::runtime_error("parameter group count mismatch while loading");
  for (auto& g : groups)
    for (auto& r : g.refs) read_mat(*r.value);
  auto state = net.state_mats();
  std::uint64_t ns = 0;
  in.read(reinterpret_cast<char*>(&ns), sizeof(ns));
  if (ns != state.size()) throw std::runtime_error("state count mismatch while loading");
  for (auto* m : state) read_mat(*m);
  if (!in) throw std::runtime_error("truncated parameter stream");
}

std::uint64_t param_digest(Net& net) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix_mat = [&h](const nn::Mat<float>& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = sizeof(float) * static_cast<std::size_t>(m.size());
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& g : net.param_groups())
    for (const auto& r : g.refs) mix_mat(*r.value);
  for (const auto* m : net.state_mats()) mix_mat(*m);
  return h;
}

}  // namespace asd
