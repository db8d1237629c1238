#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "../support/tmpdir.hpp"
#include "commands.hpp"
#include "error.hpp"

using namespace shaftpose;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) { return read_text_file(p); }

// Relative path -> bytes for every file below root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

std::vector<nlohmann::json> jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

// 32x32 model and camera so command tests stay quick.
RunConfig small_config() {
  RunConfig c = preset_config("smoke");
  c = apply_override(c, "camera.width", "32");
  c = apply_override(c, "camera.height", "32");
  c = apply_override(c, "model.input_size", "32");
  c = apply_override(c, "model.levels", "[8, 4, 2]");
  c = apply_override(c, "model.channels", "8");
  c = apply_override(c, "train.batch_size", "8");
  c = apply_override(c, "data.count", "24");
  c = apply_override(c, "train.steps", "12");
  c = apply_override(c, "train.checkpoint_every", "4");
  return c;
}

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

TEST_CASE("gen-data is bit-reproducible and writes a summary") {
  TempDir a("gena"), b("genb");
  RunConfig c = preset_config("repro");
  c.seed = 7;
  c.count = 100;
  cmd_gen_data(c, a.path());
  cmd_gen_data(c, b.path());
  const auto ta = tree(a.path()), tb = tree(b.path());
  CHECK(ta.size() > 200);
  CHECK(ta == tb);
  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  CHECK(summary["count"] == 100);
  CHECK(summary["seed"] == 7);
  CHECK(summary["pose_stripped"] == 0);
  CHECK(apply_config_json(preset_config("smoke"), slurp(a / "config.json")).seed == 7);

  // A record regenerated alone matches the one written in the batch.
  TempDir one("gen1");
  RunConfig c1 = c;
  c1.count = 1;
  cmd_gen_data(c1, one.path(), 42);
  CHECK(slurp(one / "images/000042.png") == ta.at("images/000042.png"));
}

TEST_CASE("gen-data pose-stripped fraction and invalid counts") {
  TempDir dir("strip");
  RunConfig c = small_config();
  c.count = 600;
  c.data.pose_stripped_fraction = 0.1818;
  const auto s = cmd_gen_data(c, dir.path());
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(std::abs(summary["pose_stripped_fraction"].get<double>() - 0.1818) < 0.05);
  CHECK(s.pose_stripped == summary["pose_stripped"].get<std::size_t>());
  c.count = 0;
  CHECK(code_of([&] { cmd_gen_data(c, dir / "x"); }) == ErrorCode::kConfig);
}

TEST_CASE("smoke training lowers the loss and writes its artifacts") {
  TempDir dir("train");
  RunConfig c = preset_config("smoke");
  cmd_gen_data(c, dir / "data");
  TrainOptions opt;
  opt.datasets = {dir / "data"};
  opt.out = dir / "run";
  CHECK(cmd_train(c, opt) == 200);
  const auto trace = jsonl(dir / "run/loss.jsonl");
  REQUIRE(trace.size() == 200);
  for (const char* k : {"step", "lr", "conf", "bbox", "pose", "total"}) CHECK(trace[0].contains(k));
  CHECK(trace.back()["total"].get<double>() < trace.front()["total"].get<double>());
  CHECK(fs::exists(dir / "run/checkpoints/step_000100.ckpt"));
  CHECK(fs::exists(dir / "run/checkpoints/step_000200.ckpt"));
  CHECK(fs::exists(dir / "run/model.ckpt"));
  CHECK(slurp(dir / "run/config.json") == config_to_json(c));
}

TEST_CASE("resuming reproduces the uninterrupted trace bit-exactly") {
  TempDir dir("resume");
  const RunConfig c = small_config();
  cmd_gen_data(c, dir / "data");
  TrainOptions full;
  full.datasets = {dir / "data"};
  full.out = dir / "full";
  cmd_train(c, full);

  TrainOptions part = full;
  part.out = dir / "part";
  part.stop_after_step = 6;
  CHECK(cmd_train(c, part) == 6);
  TrainOptions rest = part;
  rest.stop_after_step = -1;
  rest.resume = dir / "part/checkpoints/step_000004.ckpt";
  CHECK(cmd_train(c, rest) == 12);
  CHECK(slurp(dir / "part/loss.jsonl") == slurp(dir / "full/loss.jsonl"));
  CHECK(slurp(dir / "part/model.ckpt") == slurp(dir / "full/model.ckpt"));
}

TEST_CASE("variants C and D train from the same configuration") {
  TempDir dir("variants");
  RunConfig c = small_config();
  c.train.schedule.total_steps = 3;
  cmd_gen_data(c, dir / "data");
  for (const char* v : {"c", "d"}) {
    const RunConfig cv = apply_override(c, "model.variant", v);
    TrainOptions opt;
    opt.datasets = {dir / "data"};
    opt.out = dir / v;
    CHECK(cmd_train(cv, opt) == 3);
    const auto diff = config_to_flat(cv);
    const auto base = config_to_flat(apply_override(c, "model.variant", "d"));
    std::size_t differing = 0;
    for (const auto& [k, val] : diff) differing += base.at(k) != val;
    CHECK(differing == (std::string(v) == "c" ? 1u : 0u));
  }
}

TEST_CASE("eval: train set scores at least as well as held-out; mismatches are explicit") {
  TempDir dir("eval");
  const RunConfig c = preset_config("smoke");
  cmd_gen_data(c, dir / "train");
  RunConfig held = c;
  held.seed = 2;
  cmd_gen_data(held, dir / "held");
  TrainOptions opt;
  opt.datasets = {dir / "train"};
  opt.out = dir / "run";
  cmd_train(c, opt);

  const auto on_train = cmd_eval(c, dir / "run/model.ckpt", dir / "train", dir / "ev_train");
  const auto on_held = cmd_eval(c, dir / "run/model.ckpt", dir / "held", dir / "ev_held");
  CHECK(on_train.detected_rate >= on_held.detected_rate);
  CHECK(on_train.map >= on_held.map);
  CHECK(on_train.detected + on_train.missed == on_train.gts);
  for (const char* f : {"report.json", "report.txt", "per_image.jsonl", "config.json"}) CHECK(fs::exists(dir / "ev_held" / f));
  CHECK(jsonl(dir / "ev_held/per_image.jsonl").size() == 64);
  MESSAGE("train det " << on_train.detected_rate << " mAP " << on_train.map << "; held-out det "
                       << on_held.detected_rate << " mAP " << on_held.map);

  const RunConfig other = apply_override(c, "model.variant", "c");
  try {
    cmd_eval(other, dir / "run/model.ckpt", dir / "held", dir / "ev_bad");
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArchitectureMismatch);
  }

  std::string manifest = slurp(dir / "held/manifest.jsonl");
  const auto pos = manifest.find("\"schema_version\":1");
  REQUIRE(pos != std::string::npos);
  manifest.replace(pos, 18, "\"schema_version\":2");
  write_text_file(dir / "held/manifest.jsonl", manifest);
  CHECK(code_of([&] { cmd_eval(c, dir / "run/model.ckpt", dir / "held", dir / "ev_bad"); }) == ErrorCode::kSchema);
}

TEST_CASE("infer overlay traces the stored mask for a ground-truth pose") {
  TempDir dir("infer");
  RunConfig c = preset_config("repro");
  c.count = 6;
  cmd_gen_data(c, dir / "data");
  const auto records = read_dataset(dir / "data");
  for (const auto& r : records) {
    std::vector<ShaftPose> poses;
    for (const auto& s : r.shafts) poses.push_back(*s.pose);
    InferOptions opt;
    opt.image = dir / "data" / r.image_path;
    opt.out = dir / ("out" + std::to_string(r.index));
    opt.pose_override = poses;
    const auto dets = cmd_infer(c, opt);
    REQUIRE(dets.size() == r.shafts.size());

    Mask expected(64, 64);
    for (std::size_t k = 0; k < r.shafts.size(); ++k) {
      const Mask m = read_mask_png(dir / "data" / r.shafts[k].mask_path);
      CHECK(dets[k].bbox == r.shafts[k].bbox);
      const Mask contour = mask_contour(m);
      for (std::size_t i = 0; i < contour.bits.size(); ++i)
        if (contour.bits[i]) expected.bits[i] = 1;
    }
    const Image overlay = read_png(opt.out / "overlay.png");
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const bool green = overlay.at(x, y, 0) == kContourColor[0] && overlay.at(x, y, 1) == kContourColor[1] &&
                           overlay.at(x, y, 2) == kContourColor[2];
        CHECK(green == expected.get(x, y));
      }
    }
    CHECK(detections_from_json(slurp(opt.out / "detections.json")) == dets);
  }
}

TEST_CASE("infer: empty detections, size checks and unreadable input") {
  TempDir dir("infer2");
  RunConfig c = preset_config("repro");
  c.count = 1;
  cmd_gen_data(c, dir / "data");
  InferOptions opt;
  opt.image = dir / "data/images/000000.png";
  opt.out = dir / "empty";
  opt.pose_override = std::vector<ShaftPose>{};
  CHECK(cmd_infer(c, opt).empty());
  CHECK(read_png(dir / "empty/overlay.png") == read_png(opt.image));
  CHECK(detections_from_json(slurp(dir / "empty/detections.json")).empty());

  write_png(dir / "big.png", Image(96, 96, 3, 50));
  opt.image = dir / "big.png";
  CHECK(code_of([&] { cmd_infer(c, opt); }) == ErrorCode::kInvalidArgument);
  opt.resize = true;
  CHECK_NOTHROW(cmd_infer(c, opt));

  write_text_file(dir / "bad.png", "garbage");
  opt.image = dir / "bad.png";
  CHECK(code_of([&] { cmd_infer(c, opt); }) == ErrorCode::kIo);
  opt.image = dir / "none.png";
  CHECK(code_of([&] { cmd_infer(c, opt); }) == ErrorCode::kIo);
}

TEST_CASE("the run seed drives training") {
  TempDir dir("seeds");
  RunConfig c = small_config();
  c.train.schedule.total_steps = 2;
  cmd_gen_data(c, dir / "data");
  for (std::uint64_t s : {1, 2}) {
    RunConfig cs = c;
    cs.seed = s;
    TrainOptions opt;
    opt.datasets = {dir / "data"};
    opt.out = dir / std::to_string(s);
    cmd_train(cs, opt);
  }
  CHECK(slurp(dir / "1/loss.jsonl") != slurp(dir / "2/loss.jsonl"));
}
