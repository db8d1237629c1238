#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "detector/checkpoint.hpp"
#include "error.hpp"

namespace shaftpose {

using nlohmann::json;
using nlohmann::ordered_json;

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    fail(ErrorCode::kIo, "cannot create output directory '" + dir.string() + "'" + (ec ? ": " + ec.message() : ""));
  }
}

std::string step_line(const StepRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["conf"] = r.loss.conf;
  j["bbox"] = r.loss.bbox;
  j["pose"] = r.loss.pose;
  j["n"] = r.loss.n;
  j["total"] = r.loss.total;
  return j.dump() + "\n";
}

// Keeps the trace lines with step <= `step`.
std::string truncate_trace(const fs::path& path, std::int64_t step) {
  std::string kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (json::parse(line).at("step").get<std::int64_t>() > step) break;
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchema, "corrupt loss trace '" + path.string() + "': " + e.what());
    }
    kept += line + "\n";
  }
  return kept;
}

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld.ckpt", static_cast<long long>(step));
  return buf;
}

void load_model(DetectorModel<float>& model, const fs::path& checkpoint) {
  load_weights(model, read_checkpoint(checkpoint));
  model.set_training(false);
}

}  // namespace

GenDataSummary cmd_gen_data(const RunConfig& config, const fs::path& out, std::uint64_t start_index) {
  config.validate();
  make_dir(out);
  DatasetWriter writer(out);
  GenDataSummary summary;
  for (int i = 0; i < config.count; ++i) {
    auto sample = generate_sample(config.seed, start_index + static_cast<std::uint64_t>(i), config.data);
    writer.write(sample);
    ++summary.count;
    if (!sample.record.pose_labeled()) ++summary.pose_stripped;
    if (sample.record.shafts.size() == 2) ++summary.two_shaft;
    if (sample.record.occluded) ++summary.occluded;
  }
  ordered_json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["seed"] = config.seed;
  j["start_index"] = start_index;
  j["count"] = summary.count;
  j["pose_stripped"] = summary.pose_stripped;
  j["pose_stripped_fraction"] = static_cast<double>(summary.pose_stripped) / static_cast<double>(summary.count);
  j["two_shaft"] = summary.two_shaft;
  j["occluded"] = summary.occluded;
  write_text_file(out / "summary.json", j.dump(2) + "\n");
  write_text_file(out / "config.json", config_to_json(config));
  return summary;
}

std::int64_t cmd_train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (options.datasets.empty()) fail(ErrorCode::kInvalidArgument, "train: no dataset given");
  make_dir(options.out);
  make_dir(options.out / "checkpoints");

  const AnchorSet anchors = build_anchors(config.train.model);
  auto items = std::make_shared<std::vector<TrainItem>>();
  for (const auto& root : options.datasets) {
    auto part = load_train_items(root, anchors, config.data.ranges, config.match_threshold);
    for (auto& it : part) items->push_back(std::move(it));
  }
  TrainConfig train = config.train;
  train.seed = config.seed;
  Trainer trainer(train, items);

  const fs::path trace_path = options.out / "loss.jsonl";
  std::string trace;
  if (options.resume) {
    trainer.resume(*options.resume);
    if (fs::exists(trace_path)) trace = truncate_trace(trace_path, trainer.steps_done());
  }
  write_text_file(options.out / "config.json", config_to_json(config));
  std::ofstream trace_out(trace_path, std::ios::binary | std::ios::trunc);
  if (!trace_out) fail(ErrorCode::kIo, "cannot write '" + trace_path.string() + "'");
  trace_out << trace;

  const std::int64_t total = config.train.schedule.total_steps;
  const std::int64_t stop = options.stop_after_step >= 0 ? std::min(total, options.stop_after_step) : total;
  while (trainer.steps_done() < stop) {
    const StepRecord rec = trainer.step();
    trace_out << step_line(rec);
    if (options.on_step) options.on_step(rec);
    if (config.checkpoint_every > 0 && rec.step % config.checkpoint_every == 0) {
      trace_out.flush();
      trainer.save(options.out / "checkpoints" / checkpoint_name(rec.step));
    }
  }
  trace_out.flush();
  if (!trace_out) fail(ErrorCode::kIo, "failed writing '" + trace_path.string() + "'");
  trainer.save(options.out / "model.ckpt");
  return trainer.steps_done();
}

EvalReport cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset, const fs::path& out) {
  config.validate();
  DetectorModel<float> model(config.train.model, 0);
  load_model(model, checkpoint);
  const EvalSet set = load_eval_set(dataset);
  make_dir(out);
  std::vector<ImageDetections> dets;
  const EvalReport report = evaluate(model, set, config.eval, &dets);
  write_text_file(out / "report.json", report_json(report));
  write_text_file(out / "report.txt", report_table(report));
  write_text_file(out / "per_image.jsonl", per_image_jsonl(set, dets, config.eval.iou_threshold));
  write_text_file(out / "config.json", config_to_json(config));
  return report;
}

std::vector<ShaftPose> parse_pose_list(const std::string& json_text) {
  std::vector<ShaftPose> poses;
  try {
    json j = json::parse(json_text);
    if (j.is_object()) j = json::array({j});
    if (!j.is_array()) fail(ErrorCode::kInvalidArgument, "pose override must be a JSON object or array of objects");
    for (const auto& p : j) {
      poses.push_back({p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
                       p.at("pitch").get<double>(), p.at("yaw").get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("invalid pose override: ") + e.what());
  }
  return poses;
}

Mask mask_contour(const Mask& mask) {
  Mask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1 || !mask.get(x - 1, y) ||
                        !mask.get(x + 1, y) || !mask.get(x, y - 1) || !mask.get(x, y + 1);
      if (edge) out.set(x, y);
    }
  }
  return out;
}

Image draw_overlay(const Image& image, const ImageDetections& detections, const CameraModel& camera,
                   const ShaftGeometry& geometry) {
  Image out = image;
  const auto paint = [&](int x, int y, const std::uint8_t* color) {
    if (x < 0 || y < 0 || x >= out.width || y >= out.height) return;
    for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[c];
  };
  for (const auto& d : detections) {
    const int x0 = static_cast<int>(std::floor(d.bbox.x_min)), y0 = static_cast<int>(std::floor(d.bbox.y_min));
    const int x1 = static_cast<int>(std::ceil(d.bbox.x_max)) - 1, y1 = static_cast<int>(std::ceil(d.bbox.y_max)) - 1;
    for (int x = x0; x <= x1; ++x) {
      paint(x, y0, kBoxColor);
      paint(x, y1, kBoxColor);
    }
    for (int y = y0; y <= y1; ++y) {
      paint(x0, y, kBoxColor);
      paint(x1, y, kBoxColor);
    }
  }
  for (const auto& d : detections) {
    const Mask contour = mask_contour(render_silhouette(camera, d.pose, geometry));
    for (int y = 0; y < contour.height; ++y) {
      for (int x = 0; x < contour.width; ++x) {
        if (contour.get(x, y)) paint(x, y, kContourColor);
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& image, int width, int height) {
  Image out(width, height, image.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(image.height - 1, static_cast<int>((y + 0.5) * image.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(image.width - 1, static_cast<int>((x + 0.5) * image.width / width));
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return out;
}

ImageDetections cmd_infer(const RunConfig& config, const InferOptions& options) {
  config.validate();
  Image image = read_png(options.image);
  const CameraModel& camera = config.data.camera;
  if (image.width != camera.width() || image.height != camera.height()) {
    if (!options.resize) {
      fail(ErrorCode::kInvalidArgument, "image '" + options.image.string() + "' is " + std::to_string(image.width) +
                                            "x" + std::to_string(image.height) + ", expected " +
                                            std::to_string(camera.width()) + "x" + std::to_string(camera.height()) +
                                            " (pass --resize to rescale)");
    }
    image = resize_nearest(image, camera.width(), camera.height());
  }

  ImageDetections dets;
  if (options.pose_override) {
    for (const auto& pose : *options.pose_override) {
      const Mask m = render_silhouette(camera, pose, config.data.geometry);
      if (m.empty()) fail(ErrorCode::kNoObject, "override pose is not visible in the image");
      dets.push_back({mask_to_bbox(m), 1.0, pose, 0});
    }
  } else {
    if (!options.checkpoint) fail(ErrorCode::kInvalidArgument, "infer needs --checkpoint unless --pose-override is given");
    DetectorModel<float> model(config.train.model, 0);
    load_model(model, *options.checkpoint);
    const Image* ptr = &image;
    dets = detect(model, std::span<const Image* const>(&ptr, 1), config.eval.detect, config.data.ranges).front();
  }

  make_dir(options.out);
  write_text_file(options.out / "detections.json", detections_json(dets));
  write_png(options.out / "overlay.png", draw_overlay(image, dets, camera, config.data.geometry));
  write_text_file(options.out / "config.json", config_to_json(config));
  return dets;
}

}  // namespace shaftpose
