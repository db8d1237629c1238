#include <cstring>
#include <memory>
#include <new>
#include <string>

#include <shaftpose/shaftpose.h>

#include "commands.hpp"
#include "detector/checkpoint.hpp"
#include "error.hpp"

using namespace shaftpose;

struct sp_config {
  RunConfig config;
};

struct sp_model {
  RunConfig config;
  std::unique_ptr<DetectorModel<float>> model;
};

namespace {

thread_local std::string g_last_error;

sp_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return SP_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return SP_ERR_IO;
    case ErrorCode::kSchema: return SP_ERR_SCHEMA;
    case ErrorCode::kNumeric: return SP_ERR_NUMERIC;
    case ErrorCode::kArchitectureMismatch: return SP_ERR_ARCHITECTURE_MISMATCH;
    case ErrorCode::kNoObject: return SP_ERR_NO_OBJECT;
    case ErrorCode::kConfig: return SP_ERR_CONFIG;
  }
  return SP_ERR_INTERNAL;
}

template <typename F>
sp_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return SP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SP_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* sp_version(void) { return "0.1.0"; }

const char* sp_last_error(void) { return g_last_error.c_str(); }

const char* sp_status_name(sp_status status) {
  switch (status) {
    case SP_OK: return "ok";
    case SP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SP_ERR_IO: return "i/o error";
    case SP_ERR_SCHEMA: return "schema error";
    case SP_ERR_NUMERIC: return "numeric failure";
    case SP_ERR_ARCHITECTURE_MISMATCH: return "architecture mismatch";
    case SP_ERR_NO_OBJECT: return "no object";
    case SP_ERR_CONFIG: return "configuration error";
    case SP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void sp_string_free(char* s) { std::free(s); }

sp_status sp_config_create(const char* preset, sp_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<sp_config>();
    c->config = preset_config(preset ? preset : "repro");
    *out = c.release();
  });
}

void sp_config_destroy(sp_config* config) { delete config; }

sp_status sp_config_load_file(sp_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    config->config = load_config_file(config->config, path);
  });
}

sp_status sp_config_set(sp_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config = apply_override(config->config, key, value);
  });
}

sp_status sp_config_to_json(const sp_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(json_out, "json_out");
    *json_out = dup_string(config_to_json(config->config));
  });
}

sp_status sp_gen_data(const sp_config* config, const char* out_dir, uint64_t start_index) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    cmd_gen_data(config->config, out_dir, start_index);
  });
}

sp_status sp_train(const sp_config* config, const char* const* datasets, size_t num_datasets, const char* out_dir,
                   const char* resume, int64_t stop_after_step, sp_train_callback callback, void* user) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    if (num_datasets > 0) need(datasets, "datasets");
    TrainOptions opt;
    for (size_t i = 0; i < num_datasets; ++i) {
      need(datasets[i], "dataset path");
      opt.datasets.emplace_back(datasets[i]);
    }
    opt.out = out_dir;
    if (resume) opt.resume = fs::path(resume);
    opt.stop_after_step = stop_after_step;
    if (callback) {
      opt.on_step = [callback, user](const StepRecord& r) { callback(r.step, r.lr, r.loss.total, user); };
    }
    cmd_train(config->config, opt);
  });
}

sp_status sp_eval(const sp_config* config, const char* checkpoint, const char* dataset, const char* out_dir,
                  char** report_json) {
  return guarded([&] {
    need(config, "config");
    need(checkpoint, "checkpoint");
    need(dataset, "dataset");
    need(out_dir, "out_dir");
    const auto report = cmd_eval(config->config, checkpoint, dataset, out_dir);
    if (report_json) *report_json = dup_string(shaftpose::report_json(report));
  });
}

sp_status sp_infer(const sp_config* config, const char* checkpoint, const char* image, const char* out_dir,
                   const char* pose_override_json, int resize, char** detections_json) {
  return guarded([&] {
    need(config, "config");
    need(image, "image");
    need(out_dir, "out_dir");
    InferOptions opt;
    if (checkpoint) opt.checkpoint = fs::path(checkpoint);
    opt.image = image;
    opt.out = out_dir;
    if (pose_override_json) opt.pose_override = parse_pose_list(pose_override_json);
    opt.resize = resize != 0;
    const auto dets = cmd_infer(config->config, opt);
    if (detections_json) *detections_json = dup_string(shaftpose::detections_json(dets));
  });
}

sp_status sp_grad_check(uint64_t seed, int trials, const char* inject_fault, int* passed, char** report_text) {
  return guarded([&] {
    need(passed, "passed");
    GradCheckOptions opt;
    opt.seed = seed;
    opt.trials = trials;
    if (inject_fault) opt.inject_fault = inject_fault;
    const auto report = run_grad_checks(opt);
    *passed = report.passed() ? 1 : 0;
    if (report_text) *report_text = dup_string(report.text());
  });
}

sp_status sp_grad_check_ops(char** names) {
  return guarded([&] {
    need(names, "names");
    std::string s;
    for (const auto& n : grad_check_ops()) s += n + "\n";
    *names = dup_string(s);
  });
}

sp_status sp_model_load(const sp_config* config, const char* checkpoint, sp_model** out) {
  return guarded([&] {
    need(config, "config");
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = nullptr;
    config->config.validate();
    auto m = std::make_unique<sp_model>();
    m->config = config->config;
    m->model = std::make_unique<DetectorModel<float>>(m->config.train.model, 0);
    load_weights(*m->model, read_checkpoint(checkpoint));
    m->model->set_training(false);
    *out = m.release();
  });
}

void sp_model_destroy(sp_model* model) { delete model; }

sp_status sp_model_detect(sp_model* model, const uint8_t* rgb, int width, int height, char** detections_json) {
  return guarded([&] {
    need(model, "model");
    need(rgb, "rgb");
    need(detections_json, "detections_json");
    if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "image dimensions must be positive");
    Image image(width, height, 3);
    std::memcpy(image.pixels.data(), rgb, image.pixels.size());
    const Image* ptr = &image;
    const auto dets = detect(*model->model, std::span<const Image* const>(&ptr, 1), model->config.eval.detect,
                             model->config.data.ranges);
    *detections_json = dup_string(shaftpose::detections_json(dets.front()));
  });
}

}  // extern "C"
