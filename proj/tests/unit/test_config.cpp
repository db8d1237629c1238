#include <doctest.h>

#include "../support/tmpdir.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "error.hpp"

using namespace shaftpose;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("presets") {
  const RunConfig repro = preset_config("repro");
  CHECK(repro.train.batch_size == 32);
  CHECK(repro.train.schedule.total_steps == 6000);
  CHECK(repro.train.model.variant == Variant::kD);
  CHECK(repro.train.loss.alpha == 1.5);
  CHECK(repro.train.loss.gamma == 5.0);
  CHECK(repro.eval.detect.top_k == 250);
  CHECK(repro.eval.detect.nms_iou == 0.45);
  CHECK(repro.data.camera.width() == 64);
  CHECK_NOTHROW(repro.validate());
  const RunConfig smoke = preset_config("smoke");
  CHECK(smoke.count == 64);
  CHECK(smoke.train.schedule.total_steps == 200);
  CHECK(code_of([] { preset_config("fast"); }) == ErrorCode::kConfig);
}

TEST_CASE("config JSON echo reproduces the configuration") {
  RunConfig c = preset_config("repro");
  c = apply_override(c, "model.variant", "c");
  c = apply_override(c, "train.base_lr", "0.0123");
  c = apply_override(c, "ranges.yaw", "[0, 300]");
  const std::string echo = config_to_json(c);
  const RunConfig back = apply_config_json(preset_config("smoke"), echo);
  CHECK(config_to_json(back) == echo);
  CHECK(back.train.model.variant == Variant::kC);
  CHECK(back.train.schedule.base_lr == 0.0123);
  CHECK(back.data.ranges[4].max == 300);
}

TEST_CASE("every flat key is accepted back") {
  const RunConfig c = preset_config("repro");
  for (const auto& [k, v] : config_to_flat(c)) {
    CHECK_NOTHROW(apply_override(c, k, v));
  }
}

TEST_CASE("unknown keys and mistyped values are configuration errors naming the key") {
  const RunConfig c = preset_config("repro");
  try {
    apply_config_json(c, R"({"train.stepz": 5})");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("train.stepz") != std::string::npos);
  }
  CHECK(code_of([&] { apply_override(c, "nope", "1"); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { apply_override(c, "train.steps", "\"many\""); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { apply_config_json(c, "[1,2]"); }) == ErrorCode::kConfig);
}

TEST_CASE("validation") {
  RunConfig c = preset_config("repro");
  c.count = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = apply_override(preset_config("repro"), "camera.width", "80");
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = apply_override(preset_config("repro"), "ranges.z", "[40, 10]");
  CHECK_THROWS_AS(c.validate(), Error);
  c = apply_override(preset_config("repro"), "augment.noise_probability", "1.5");
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("config files") {
  testing_support::TempDir dir("cfg");
  write_text_file(dir / "a.json", R"({"seed": 99, "data.count": 7})");
  const RunConfig c = load_config_file(preset_config("repro"), dir / "a.json");
  CHECK(c.seed == 99);
  CHECK(c.count == 7);
  CHECK(code_of([&] { load_config_file(c, dir / "missing.json"); }) == ErrorCode::kIo);
}
