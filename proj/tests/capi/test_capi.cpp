#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <shaftpose/shaftpose.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "../support/tmpdir.hpp"

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { sp_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Config {
  sp_config* c = nullptr;
  explicit Config(const char* preset) { REQUIRE(sp_config_create(preset, &c) == SP_OK); }
  ~Config() { sp_config_destroy(c); }
  void set(const char* k, const char* v) { REQUIRE_MESSAGE(sp_config_set(c, k, v) == SP_OK, sp_last_error()); }
};

void make_small(Config& c) {
  c.set("camera.width", "32");
  c.set("camera.height", "32");
  c.set("model.input_size", "32");
  c.set("model.levels", "[8,4,2]");
  c.set("model.channels", "8");
  c.set("train.batch_size", "4");
  c.set("train.steps", "6");
  c.set("train.checkpoint_every", "3");
  c.set("data.count", "10");
}

void count_steps(int64_t, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(sp_version()).size() > 0);
  CHECK(std::string(sp_status_name(SP_OK)) == "ok");
  CHECK(std::string(sp_status_name(SP_ERR_CONFIG)).size() > 0);
}

TEST_CASE("configuration errors carry codes and messages") {
  sp_config* c = nullptr;
  CHECK(sp_config_create("nope", &c) == SP_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(sp_last_error()).find("nope") != std::string::npos);
  CHECK(sp_config_create(nullptr, nullptr) == SP_ERR_INVALID_ARGUMENT);

  Config cfg(nullptr);
  CHECK(sp_config_set(cfg.c, "bogus.key", "1") == SP_ERR_CONFIG);
  CHECK(std::string(sp_last_error()).find("bogus.key") != std::string::npos);
  CHECK(sp_config_set(cfg.c, "model.variant", "c") == SP_OK);
  Owned json;
  REQUIRE(sp_config_to_json(cfg.c, &json.p) == SP_OK);
  const auto j = nlohmann::json::parse(json.str());
  CHECK(j["model.variant"] == "C");
  CHECK(sp_config_load_file(cfg.c, "/nonexistent/config.json") == SP_ERR_IO);
}

TEST_CASE("generate, train, evaluate and infer through the shared library") {
  testing_support::TempDir dir("capi");
  Config cfg("smoke");
  make_small(cfg);
  const std::string data = (dir / "data").string(), run = (dir / "run").string();
  REQUIRE_MESSAGE(sp_gen_data(cfg.c, data.c_str(), 0) == SP_OK, sp_last_error());

  const char* sets[] = {data.c_str()};
  int steps = 0;
  REQUIRE_MESSAGE(sp_train(cfg.c, sets, 1, run.c_str(), nullptr, -1, count_steps, &steps) == SP_OK, sp_last_error());
  CHECK(steps == 6);
  const std::string ckpt = run + "/model.ckpt";

  Owned report;
  REQUIRE(sp_eval(cfg.c, ckpt.c_str(), data.c_str(), (dir / "eval").string().c_str(), &report.p) == SP_OK);
  const auto r = nlohmann::json::parse(report.str());
  CHECK(r.contains("detected_rate"));
  CHECK(r.contains("map"));

  Owned dets;
  const std::string img = data + "/images/000000.png";
  REQUIRE(sp_infer(cfg.c, ckpt.c_str(), img.c_str(), (dir / "infer").string().c_str(), nullptr, 0, &dets.p) == SP_OK);
  CHECK(nlohmann::json::parse(dets.str()).at("detections").is_array());
  CHECK(std::filesystem::exists(dir / "infer/overlay.png"));

  sp_model* model = nullptr;
  REQUIRE(sp_model_load(cfg.c, ckpt.c_str(), &model) == SP_OK);
  std::vector<uint8_t> rgb(32 * 32 * 3, 80);
  Owned live;
  CHECK(sp_model_detect(model, rgb.data(), 32, 32, &live.p) == SP_OK);
  CHECK(nlohmann::json::parse(live.str()).at("detections").is_array());
  CHECK(sp_model_detect(model, rgb.data(), 16, 16, nullptr) == SP_ERR_INVALID_ARGUMENT);
  sp_model_destroy(model);

  Config other("smoke");
  make_small(other);
  other.set("model.variant", "c");
  CHECK(sp_eval(other.c, ckpt.c_str(), data.c_str(), (dir / "bad").string().c_str(), nullptr) ==
        SP_ERR_ARCHITECTURE_MISMATCH);
  CHECK(sp_eval(cfg.c, "/nonexistent.ckpt", data.c_str(), (dir / "bad").string().c_str(), nullptr) == SP_ERR_IO);
}

TEST_CASE("gradient suite through the C API") {
  Owned names;
  REQUIRE(sp_grad_check_ops(&names.p) == SP_OK);
  const std::string all = names.str();
  const std::string first = all.substr(0, all.find('\n'));
  CHECK(!first.empty());
  int passed = -1;
  Owned text;
  REQUIRE(sp_grad_check(1, 1, first.c_str(), &passed, &text.p) == SP_OK);
  CHECK(passed == 0);
  CHECK(sp_grad_check(1, 1, "no_such_op", &passed, nullptr) != SP_OK);
}
