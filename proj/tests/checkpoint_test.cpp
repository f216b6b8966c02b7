#include <string>

#include "asd/checkpoint.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asd;

namespace {

TrainerConfig tiny_config() {
  TrainerConfig cfg;
  cfg.model.class_count = 3;
  cfg.model.input_channels = 1;
  cfg.model.input_height = 16;
  cfg.model.input_width = 16;
  cfg.model.base_width = 4;
  cfg.schedule = StageSchedule{2, 3, 4};
  cfg.split.seed_per_class = 1;
  cfg.mixmatch.batch_size = 8;
  cfg.mixmatch.crop_pad = 2;
  cfg.seed = 13;
  return cfg;
}

PoisonedDataset tiny_train(int n, std::uint64_t seed) {
  Rng rng = make_stream(seed, "ckpt-train");
  PoisonedDataset data;
  data.class_count = 3;
  for (int i = 0; i < n; ++i) {
    PoisonedSample s;
    s.image = make_image(1, 16, 16);
    for (auto& v : s.image.data) v = static_cast<float>(uniform01(rng));
    s.ground_truth_label = i % 3;
    s.assigned_label = s.ground_truth_label;
    s.index = i;
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace

TEST_CASE("training continues bit-identically after a save/load round-trip") {
  asd::test::TempDir tmp;
  const TrainerConfig cfg = tiny_config();
  const PoisonedDataset train = tiny_train(20, 1);
  const DataPools pools = init_pools(train.size(), SeedSet{{0, 1, 2, 3, 4, 5}, 2});

  TrainState live = make_train_state(cfg);
  semi_supervised_epoch(live, train, pools, cfg.mixmatch);
  const std::string manifest = save_checkpoint(tmp.path(), live, cfg);
  CHECK(manifest.find("checkpoint-1.manifest") != std::string::npos);

  TrainState restored = load_checkpoint(manifest, cfg);
  CHECK(restored.epoch == 1);
  REQUIRE(param_digest(*restored.model) == param_digest(*live.model));

  // one more epoch on each must stay in lockstep: params, optimizer moments,
  // and rng streams all came back
  semi_supervised_epoch(live, train, pools, cfg.mixmatch);
  semi_supervised_epoch(restored, train, pools, cfg.mixmatch);
  CHECK(param_digest(*restored.model) == param_digest(*live.model));
  CHECK(restored.epoch == live.epoch);
}

TEST_CASE("the latest checkpoint is the highest epoch") {
  asd::test::TempDir tmp;
  const TrainerConfig cfg = tiny_config();
  TrainState state = make_train_state(cfg);

  CHECK(!latest_checkpoint(tmp.path()).has_value());

  state.epoch = 2;
  save_checkpoint(tmp.path(), state, cfg);
  state.epoch = 10;
  save_checkpoint(tmp.path(), state, cfg);
  state.epoch = 9;
  save_checkpoint(tmp.path(), state, cfg);

  const auto latest = latest_checkpoint(tmp.path());
  REQUIRE(latest.has_value());
  CHECK(latest->find("checkpoint-10.manifest") != std::string::npos);

  const TrainState restored = load_checkpoint(*latest, cfg);
  CHECK(restored.epoch == 10);
}

TEST_CASE("checkpoints reject a different model configuration") {
  asd::test::TempDir tmp;
  const TrainerConfig cfg = tiny_config();
  TrainState state = make_train_state(cfg);
  const std::string manifest = save_checkpoint(tmp.path(), state, cfg);

  TrainerConfig wider = cfg;
  wider.model.base_width = 8;
  CHECK_THROWS_WITH(load_checkpoint(manifest, wider), doctest::Contains("width mismatch"));

  TrainerConfig other_arch = cfg;
  other_arch.model.arch = "resnet18-like";
  CHECK_THROWS_WITH(load_checkpoint(manifest, other_arch),
                    doctest::Contains("architecture mismatch"));

  TrainerConfig other_shape = cfg;
  other_shape.model.input_height = 32;
  other_shape.model.input_width = 32;
  CHECK_THROWS_WITH(load_checkpoint(manifest, other_shape),
                    doctest::Contains("input shape mismatch"));

  CHECK_THROWS_WITH(load_checkpoint(tmp.file("checkpoint-99.manifest"), cfg),
                    doctest::Contains("cannot open checkpoint manifest"));
}
