#include "asd/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace asd {

namespace fs = std::filesystem;

std::string save_checkpoint(const std::string& dir, TrainState& state, const TrainerConfig& cfg) {
  fs::create_directories(dir);
  const std::string stem = "checkpoint-" + std::to_string(state.epoch);
  const std::string bin_name = stem + ".bin";
  const std::string manifest_path = dir + "/" + stem + ".manifest";

  {
    std::ofstream bin(dir + "/" + bin_name, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write checkpoint binary in " + dir);
    save_params(*state.model, bin);
    state.optimizer->save_state(bin);
    if (!bin) throw std::runtime_error("short write to checkpoint binary in " + dir);
  }

  std::ofstream m(manifest_path);
  if (!m) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
  m << "asd-checkpoint 1\n";
  m << "epoch " << state.epoch << "\n";
  m << "arch " << cfg.model.arch << "\n";
  m << "base_width " << cfg.model.base_width << "\n";
  m << "class_count " << cfg.model.class_count << "\n";
  m << "input " << cfg.model.input_channels << " " << cfg.model.input_height << " "
    << cfg.model.input_width << "\n";
  m << "params_file " << bin_name << "\n";
  m << "train_rng " << serialize_rng(state.train_rng) << "\n";
  m << "virtual_rng " << serialize_rng(state.virtual_rng) << "\n";
  if (!m) throw std::runtime_error("short write to checkpoint manifest in " + dir);
  return manifest_path;
}

TrainState load_checkpoint(const std::string& manifest_path, const TrainerConfig& cfg) {
  std::ifstream m(manifest_path);
  if (!m) throw std::runtime_error("cannot open checkpoint manifest: " + manifest_path);
  std::string magic;
  int version = 0;
  m >> magic >> version;
  if (magic != "asd-checkpoint" || version != 1)
    throw std::runtime_error("unrecognized checkpoint format: " + manifest_path);

  TrainState state = make_train_state(cfg);
  std::string params_file;
  std::string key;
  while (m >> key) {
    if (key == "epoch") {
      m >> state.epoch;
    } else if (key == "arch") {
      std::string arch;
      m >> arch;
      if (arch != cfg.model.arch) throw std::runtime_error("checkpoint architecture mismatch");
    } else if (key == "base_width") {
      int v = 0;
      m >> v;
      if (v != cfg.model.base_width) throw std::runtime_error("checkpoint width mismatch");
    } else if (key == "class_count") {
      int v = 0;
      m >> v;
      if (v != cfg.model.class_count) throw std::runtime_error("checkpoint class count mismatch");
    } else if (key == "input") {
      int c = 0, h = 0, w = 0;
      m >> c >> h >> w;
      if (c != cfg.model.input_channels || h != cfg.model.input_height || w != cfg.model.input_width)
        throw std::runtime_error("checkpoint input shape mismatch");
    } else if (key == "params_file") {
      m >> params_file;
    } else if (key == "train_rng" || key == "virtual_rng") {
      std::string line;
      std::getline(m, line);
      if (key == "train_rng")
        state.train_rng = deserialize_rng(line);
      else
        state.virtual_rng = deserialize_rng(line);
    } else {
      throw std::runtime_error("unknown checkpoint manifest key: " + key);
    }
    if (!m) throw std::runtime_error("malformed checkpoint manifest: " + manifest_path);
  }
  if (params_file.empty()) throw std::runtime_error("checkpoint manifest names no parameter file");

  const fs::path bin_path = fs::path(manifest_path).parent_path() / params_file;
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint binary: " + bin_path.string());
  load_params(*state.model, bin);
  state.optimizer->load_state(bin);
  return state;
}

std::optional<std::string> latest_checkpoint(const std::string& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  int best_epoch = -1;
  std::string best_path;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint-", 0) != 0 || entry.path().extension() != ".manifest") continue;
    const std::string digits = entry.path().stem().string().substr(std::string("checkpoint-").size());
    int epoch = -1;
    try {
      epoch = std::stoi(digits);
    } catch (...) {
      continue;
    }
    if (epoch > best_epoch) {
      best_epoch = epoch;
      best_path = entry.path().string();
    }
  }
  if (best_epoch < 0) return std::nullopt;
  return best_path;
}

}  // namespace asd
