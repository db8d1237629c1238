#include "config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace shaftpose {

using nlohmann::ordered_json;

namespace {

constexpr const char* kRangeKeys[kPoseDims] = {"ranges.x", "ranges.y", "ranges.z", "ranges.pitch", "ranges.yaw"};

ordered_json to_flat_json(const RunConfig& c) {
  const auto& d = c.data;
  const auto& t = c.train;
  const auto& m = t.model;
  ordered_json j;
  j["seed"] = c.seed;
  j["data.count"] = c.count;
  j["data.two_shaft_probability"] = d.two_shaft_probability;
  j["data.pose_stripped_fraction"] = d.pose_stripped_fraction;
  j["data.light_min"] = d.light_min;
  j["data.light_max"] = d.light_max;
  j["data.min_clearance"] = d.min_clearance;
  j["data.max_retries"] = d.max_retries;
  j["data.background_hue_jitter"] = d.background.hue_jitter;
  j["data.background_saturation_jitter"] = d.background.saturation_jitter;
  j["data.background_brightness_jitter"] = d.background.brightness_jitter;
  j["camera.width"] = d.camera.width();
  j["camera.height"] = d.camera.height();
  j["camera.fov_deg"] = d.camera.horizontal_fov();
  for (std::size_t p = 0; p < kPoseDims; ++p) j[kRangeKeys[p]] = {d.ranges.dims[p].min, d.ranges.dims[p].max};
  j["shaft.radius"] = d.geometry.radius;
  j["shaft.length"] = d.geometry.length;
  j["shaft.tip"] = d.geometry.tip == TipStyle::kFlat ? "flat" : "hemisphere";
  j["model.variant"] = variant_name(m.variant);
  j["model.input_size"] = m.backbone.input_size;
  j["model.levels"] = m.backbone.levels;
  j["model.channels"] = m.backbone.channels;
  j["model.stem_channels"] = m.backbone.stem_channels;
  j["model.pose_hidden"] = m.pose_hidden;
  j["model.pose_tanh"] = m.pose_tanh;
  j["anchors.aspect_ratios"] = m.anchors.aspect_ratios;
  j["anchors.extra_square"] = m.anchors.extra_square;
  j["anchors.min_scale"] = m.anchors.min_scale;
  j["anchors.max_scale"] = m.anchors.max_scale;
  j["loss.alpha"] = t.loss.alpha;
  j["loss.beta"] = t.loss.beta;
  j["loss.gamma"] = t.loss.gamma;
  j["loss.neg_pos_ratio"] = t.loss.neg_pos_ratio;
  j["loss.pose_loss_on_negatives"] = t.loss.pose_on_negatives;
  j["train.steps"] = t.schedule.total_steps;
  j["train.base_lr"] = t.schedule.base_lr;
  j["train.lr_power"] = t.schedule.power;
  j["train.batch_size"] = t.batch_size;
  j["train.match_threshold"] = c.match_threshold;
  j["train.checkpoint_every"] = c.checkpoint_every;
  j["train.augment"] = t.augment;
  j["augment.hue_deg"] = t.augmentation.hue;
  j["augment.saturation"] = t.augmentation.saturation;
  j["augment.brightness"] = t.augmentation.brightness;
  j["augment.contrast"] = t.augmentation.contrast;
  j["augment.noise_amplitude"] = t.augmentation.noise_amplitude;
  j["augment.noise_probability"] = t.augmentation.noise_probability;
  j["eval.top_k"] = c.eval.detect.top_k;
  j["eval.score_threshold"] = c.eval.detect.score_threshold;
  j["eval.nms_iou"] = c.eval.detect.nms_iou;
  j["eval.iou_threshold"] = c.eval.iou_threshold;
  return j;
}

template <typename T>
T get(const ordered_json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kConfig, "config key '" + key + "' has an invalid value " + j.at(key).dump());
  }
}

RunConfig from_flat_json(const ordered_json& j) {
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed");
  c.count = get<int>(j, "data.count");
  auto& d = c.data;
  d.two_shaft_probability = get<double>(j, "data.two_shaft_probability");
  d.pose_stripped_fraction = get<double>(j, "data.pose_stripped_fraction");
  d.light_min = get<double>(j, "data.light_min");
  d.light_max = get<double>(j, "data.light_max");
  d.min_clearance = get<double>(j, "data.min_clearance");
  d.max_retries = get<int>(j, "data.max_retries");
  d.background.hue_jitter = get<double>(j, "data.background_hue_jitter");
  d.background.saturation_jitter = get<double>(j, "data.background_saturation_jitter");
  d.background.brightness_jitter = get<double>(j, "data.background_brightness_jitter");
  const int w = get<int>(j, "camera.width"), h = get<int>(j, "camera.height");
  if (w < 1 || h < 1) fail(ErrorCode::kConfig, "camera.width and camera.height must be positive");
  const double fov = get<double>(j, "camera.fov_deg");
  if (!(fov > 0.0 && fov < 180.0)) fail(ErrorCode::kConfig, "camera.fov_deg must lie in (0, 180)");
  d.camera = CameraModel(w, h, fov);
  for (std::size_t p = 0; p < kPoseDims; ++p) {
    const auto r = get<std::array<double, 2>>(j, kRangeKeys[p]);
    d.ranges.dims[p] = {r[0], r[1]};
  }
  d.geometry.radius = get<double>(j, "shaft.radius");
  d.geometry.length = get<double>(j, "shaft.length");
  const auto tip = get<std::string>(j, "shaft.tip");
  if (tip == "flat") {
    d.geometry.tip = TipStyle::kFlat;
  } else if (tip == "hemisphere") {
    d.geometry.tip = TipStyle::kHemisphere;
  } else {
    fail(ErrorCode::kConfig, "shaft.tip must be 'flat' or 'hemisphere', got '" + tip + "'");
  }

  auto& t = c.train;
  auto& m = t.model;
  try {
    m.variant = parse_variant(get<std::string>(j, "model.variant"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("model.variant: ") + e.what());
  }
  m.backbone.input_size = get<int>(j, "model.input_size");
  m.backbone.levels = get<std::vector<int>>(j, "model.levels");
  m.backbone.channels = get<int>(j, "model.channels");
  m.backbone.stem_channels = get<int>(j, "model.stem_channels");
  m.pose_hidden = get<int>(j, "model.pose_hidden");
  m.pose_tanh = get<bool>(j, "model.pose_tanh");
  m.anchors.aspect_ratios = get<std::vector<double>>(j, "anchors.aspect_ratios");
  m.anchors.extra_square = get<bool>(j, "anchors.extra_square");
  m.anchors.min_scale = get<double>(j, "anchors.min_scale");
  m.anchors.max_scale = get<double>(j, "anchors.max_scale");
  t.loss.alpha = get<double>(j, "loss.alpha");
  t.loss.beta = get<std::array<double, kPoseDims>>(j, "loss.beta");
  t.loss.gamma = get<double>(j, "loss.gamma");
  t.loss.neg_pos_ratio = get<double>(j, "loss.neg_pos_ratio");
  t.loss.pose_on_negatives = get<bool>(j, "loss.pose_loss_on_negatives");
  t.schedule.total_steps = get<std::int64_t>(j, "train.steps");
  t.schedule.base_lr = get<double>(j, "train.base_lr");
  t.schedule.power = get<double>(j, "train.lr_power");
  t.batch_size = get<int>(j, "train.batch_size");
  c.match_threshold = get<double>(j, "train.match_threshold");
  c.checkpoint_every = get<std::int64_t>(j, "train.checkpoint_every");
  t.augment = get<bool>(j, "train.augment");
  t.augmentation.hue = get<double>(j, "augment.hue_deg");
  t.augmentation.saturation = get<double>(j, "augment.saturation");
  t.augmentation.brightness = get<double>(j, "augment.brightness");
  t.augmentation.contrast = get<double>(j, "augment.contrast");
  t.augmentation.noise_amplitude = get<double>(j, "augment.noise_amplitude");
  t.augmentation.noise_probability = get<double>(j, "augment.noise_probability");
  t.seed = c.seed;
  c.eval.detect.top_k = get<int>(j, "eval.top_k");
  c.eval.detect.score_threshold = get<double>(j, "eval.score_threshold");
  c.eval.detect.nms_iou = get<double>(j, "eval.nms_iou");
  c.eval.iou_threshold = get<double>(j, "eval.iou_threshold");
  c.eval.ranges = d.ranges;
  c.eval.camera = d.camera;
  c.eval.geometry = d.geometry;
  return c;
}

ordered_json parse_object(const std::string& text, const std::string& what) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, what + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kConfig, what + " must be a JSON object of flat keys");
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (count < 1) fail(ErrorCode::kConfig, "data.count must be at least 1");
  data.validate();
  train.validate();
  eval.detect.validate();
  if (!(match_threshold > 0.0 && match_threshold < 1.0)) fail(ErrorCode::kConfig, "train.match_threshold must lie in (0,1)");
  if (!(eval.iou_threshold > 0.0 && eval.iou_threshold <= 1.0)) fail(ErrorCode::kConfig, "eval.iou_threshold must lie in (0,1]");
  if (checkpoint_every < 0) fail(ErrorCode::kConfig, "train.checkpoint_every must be non-negative");
  const int s = train.model.backbone.input_size;
  if (data.camera.width() != s || data.camera.height() != s) {
    fail(ErrorCode::kConfig, "camera size " + std::to_string(data.camera.width()) + "x" +
                                 std::to_string(data.camera.height()) + " must equal model.input_size " +
                                 std::to_string(s) + " in both dimensions");
  }
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.train.schedule.base_lr = 1e-2;
  if (name == "repro") return c;
  if (name == "smoke") {
    c.count = 64;
    c.train.schedule.total_steps = 200;
    c.checkpoint_every = 100;
    return c;
  }
  fail(ErrorCode::kConfig, "unknown preset '" + name + "' (expected repro or smoke)");
}

std::map<std::string, std::string> config_to_flat(const RunConfig& config) {
  std::map<std::string, std::string> out;
  const auto flat = to_flat_json(config);
  for (const auto& [k, v] : flat.items()) out[k] = v.dump();
  return out;
}

std::string config_to_json(const RunConfig& config) { return to_flat_json(config).dump(2) + "\n"; }

RunConfig apply_config_json(const RunConfig& base, const std::string& json_text) {
  auto flat = to_flat_json(base);
  const auto in = parse_object(json_text, "config");
  for (const auto& [k, v] : in.items()) {
    if (!flat.contains(k)) fail(ErrorCode::kConfig, "unknown config key '" + k + "'");
    flat[k] = v;
  }
  return from_flat_json(flat);
}

RunConfig apply_override(const RunConfig& base, const std::string& key, const std::string& value) {
  ordered_json v;
  try {
    v = ordered_json::parse(value);
  } catch (const nlohmann::json::exception&) {
    v = value;
  }
  ordered_json obj;
  obj[key] = v;
  return apply_config_json(base, obj.dump());
}

RunConfig load_config_file(const RunConfig& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return apply_config_json(base, ss.str());
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace shaftpose
