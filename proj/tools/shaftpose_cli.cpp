// Command-line front end over the C API.
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <shaftpose/shaftpose.h>

namespace {

// Exit codes: 0 success, 1 validation or I/O error, 2 numeric failure.
int exit_code(sp_status s) {
  if (s == SP_OK) return 0;
  return s == SP_ERR_NUMERIC ? 2 : 1;
}

int report(sp_status s) {
  if (s != SP_OK) std::fprintf(stderr, "error (%s): %s\n", sp_status_name(s), sp_last_error());
  return exit_code(s);
}

struct Overrides {
  std::vector<std::pair<std::string, std::string>> items;
  void add(const std::string& key, const std::string& value) { items.emplace_back(key, value); }
};

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void print_progress(int64_t step, double lr, double total, void*) {
  if (step % 100 == 0) std::fprintf(stderr, "step %lld  lr %.3e  loss %.4f\n", static_cast<long long>(step), lr, total);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrument shaft detection and pose estimation from synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string preset = "repro";
  std::string config_path;
  std::optional<uint64_t> seed;
  std::vector<std::string> sets;
  app.add_option("--preset", preset, "Starting configuration: repro or smoke")->capture_default_str();
  app.add_option("--config", config_path, "JSON file of flat configuration keys");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--set", sets, "Override a configuration key, KEY=VALUE (repeatable)");

  Overrides ov;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out;
  std::optional<int> count;
  std::optional<double> stripped, two_shaft;
  uint64_t start_index = 0;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--count", count, "Number of images");
  gen->add_option("--pose-stripped-fraction", stripped, "Fraction of records without pose labels");
  gen->add_option("--two-shaft-probability", two_shaft, "Probability of a second shaft");
  gen->add_option("--start-index", start_index, "Index of the first record");

  auto* train = app.add_subcommand("train", "Train a detector");
  std::vector<std::string> train_data;
  std::string train_out, resume, variant;
  std::optional<int64_t> steps, ckpt_every;
  std::optional<int> batch;
  std::optional<double> lr;
  int64_t stop_after = -1;
  bool no_noise = false, quiet = false;
  train->add_option("--data", train_data, "Dataset directory (repeatable; records are concatenated)")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--variant", variant, "Pose head: c or d");
  train->add_option("--steps", steps, "Total training steps");
  train->add_option("--lr", lr, "Base learning rate");
  train->add_option("--batch-size", batch, "Images per step");
  train->add_option("--checkpoint-every", ckpt_every, "Checkpoint interval in steps (0: final only)");
  train->add_flag("--no-noise", no_noise, "Disable pixel-noise augmentation");
  train->add_option("--resume", resume, "Continue from this checkpoint");
  train->add_option("--stop-after-step", stop_after, "Stop once this many steps are complete");
  train->add_flag("--quiet", quiet, "No progress output");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_out, eval_variant;
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Report directory")->required();
  eval->add_option("--variant", eval_variant, "Pose head of the checkpoint: c or d");

  auto* infer = app.add_subcommand("infer", "Detect shafts in one image and draw an overlay");
  std::string infer_ckpt, infer_image, infer_out, pose_override, infer_variant;
  bool resize = false;
  infer->add_option("--checkpoint", infer_ckpt, "Model checkpoint");
  infer->add_option("--image", infer_image, "Input PNG")->required();
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_option("--pose-override", pose_override, "Draw these poses instead of running the model (JSON)");
  infer->add_option("--variant", infer_variant, "Pose head of the checkpoint: c or d");
  infer->add_flag("--resize", resize, "Rescale images whose size differs from the camera");

  auto* grad = app.add_subcommand("grad-check", "Check analytic gradients against finite differences");
  int trials = 10;
  std::string inject_fault;
  bool list_ops = false;
  grad->add_option("--trials", trials, "Random shapes per op")->capture_default_str();
  grad->add_option("--inject-fault", inject_fault, "Corrupt the backward pass of this op");
  grad->add_flag("--list", list_ops, "List registered ops and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (grad->parsed()) {
    if (list_ops) {
      char* names = nullptr;
      const sp_status s = sp_grad_check_ops(&names);
      if (s == SP_OK) std::fputs(names, stdout);
      sp_string_free(names);
      return report(s);
    }
    int passed = 0;
    char* text = nullptr;
    const sp_status s = sp_grad_check(seed.value_or(1), trials, inject_fault.empty() ? nullptr : inject_fault.c_str(),
                                      &passed, &text);
    if (s != SP_OK) return report(s);
    std::fputs(text, stdout);
    sp_string_free(text);
    std::printf("%s\n", passed ? "all ops within tolerance" : "gradient check FAILED");
    return passed ? 0 : 1;
  }

  // Precedence: preset, then --config file, then --set, then dedicated flags.
  sp_config* cfg = nullptr;
  if (const sp_status s = sp_config_create(preset.c_str(), &cfg); s != SP_OK) return report(s);
  std::unique_ptr<sp_config, decltype(&sp_config_destroy)> guard(cfg, sp_config_destroy);
  if (!config_path.empty()) {
    if (const sp_status s = sp_config_load_file(cfg, config_path.c_str()); s != SP_OK) return report(s);
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
      return 1;
    }
    ov.add(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) ov.add("seed", std::to_string(*seed));
  if (count) ov.add("data.count", std::to_string(*count));
  if (stripped) ov.add("data.pose_stripped_fraction", number(*stripped));
  if (two_shaft) ov.add("data.two_shaft_probability", number(*two_shaft));
  for (const auto* v : {&variant, &eval_variant, &infer_variant}) {
    if (!v->empty()) ov.add("model.variant", json_string(*v));
  }
  if (steps) ov.add("train.steps", std::to_string(*steps));
  if (lr) ov.add("train.base_lr", number(*lr));
  if (batch) ov.add("train.batch_size", std::to_string(*batch));
  if (ckpt_every) ov.add("train.checkpoint_every", std::to_string(*ckpt_every));
  if (no_noise) ov.add("augment.noise_probability", "0");
  for (const auto& [k, v] : ov.items) {
    if (const sp_status s = sp_config_set(cfg, k.c_str(), v.c_str()); s != SP_OK) return report(s);
  }

  if (gen->parsed()) return report(sp_gen_data(cfg, gen_out.c_str(), start_index));

  if (train->parsed()) {
    std::vector<const char*> roots;
    for (const auto& d : train_data) roots.push_back(d.c_str());
    return report(sp_train(cfg, roots.data(), roots.size(), train_out.c_str(), resume.empty() ? nullptr : resume.c_str(),
                           stop_after, quiet ? nullptr : print_progress, nullptr));
  }

  if (eval->parsed()) {
    char* json = nullptr;
    const sp_status s = sp_eval(cfg, eval_ckpt.c_str(), eval_data.c_str(), eval_out.c_str(), &json);
    if (s == SP_OK) std::fputs(json, stdout);
    sp_string_free(json);
    return report(s);
  }

  if (infer->parsed()) {
    char* json = nullptr;
    const sp_status s = sp_infer(cfg, infer_ckpt.empty() ? nullptr : infer_ckpt.c_str(), infer_image.c_str(),
                                 infer_out.c_str(), pose_override.empty() ? nullptr : pose_override.c_str(), resize ? 1 : 0,
                                 &json);
    if (s == SP_OK) std::fputs(json, stdout);
    sp_string_free(json);
    return report(s);
  }
  return 1;
}
