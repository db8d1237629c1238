#include "datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace shaftpose {

using nlohmann::json;

void AugmentationConfig::validate() const {
  if (hue < 0 || saturation < 0 || brightness < 0 || contrast < 0 || noise_amplitude < 0) {
    fail(ErrorCode::kConfig, "augmentation amplitudes must be non-negative");
  }
  if (noise_probability < 0 || noise_probability > 1) {
    fail(ErrorCode::kConfig, "augmentation noise probability must lie in [0, 1]");
  }
}

void DataGenConfig::validate() const {
  ranges.validate();
  geometry.validate();
  if (ranges[2].min <= 0.0) fail(ErrorCode::kConfig, "z range must be in front of the camera (z > 0)");
  if (two_shaft_probability < 0 || two_shaft_probability > 1) {
    fail(ErrorCode::kConfig, "two-shaft probability must lie in [0, 1]");
  }
  if (pose_stripped_fraction < 0 || pose_stripped_fraction > 1) {
    fail(ErrorCode::kConfig, "pose-stripped fraction must lie in [0, 1]");
  }
  if (!(light_min > 0 && light_min <= light_max)) fail(ErrorCode::kConfig, "invalid light intensity range");
  if (max_retries < 1) fail(ErrorCode::kConfig, "max_retries must be at least 1");
}

bool DatasetRecord::pose_labeled() const {
  return !shafts.empty() && std::all_of(shafts.begin(), shafts.end(), [](const auto& s) { return s.pose.has_value(); });
}

std::uint64_t record_seed(std::uint64_t global_seed, std::uint64_t index) { return mix_seed(global_seed, index); }

ShaftPose sample_pose(Rng& rng, const PoseRanges& ranges) {
  ShaftPose p;
  for (std::size_t i = 0; i < kPoseDims; ++i) p[i] = rng.uniform(ranges[i].min, ranges[i].max);
  return p;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp)) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  const double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

namespace {

std::uint8_t to_byte(double v255) { return static_cast<std::uint8_t>(std::clamp(std::lround(v255), 0L, 255L)); }

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise over a (cells+1)^2 lattice of uniform values, smoothstep-interpolated.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int cells) : cells_(cells), lattice_((cells + 1) * (cells + 1)) {
    for (auto& v : lattice_) v = rng.uniform();
  }
  // u, v in [0, 1]
  double sample(double u, double v) const {
    const double fx = u * cells_, fy = v * cells_;
    const int ix = std::min(static_cast<int>(fx), cells_ - 1);
    const int iy = std::min(static_cast<int>(fy), cells_ - 1);
    const double tx = smoothstep(fx - ix), ty = smoothstep(fy - iy);
    const auto at = [&](int x, int y) { return lattice_[y * (cells_ + 1) + x]; };
    const double top = at(ix, iy) + tx * (at(ix + 1, iy) - at(ix, iy));
    const double bot = at(ix, iy + 1) + tx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
    return top + ty * (bot - top);
  }

 private:
  int cells_;
  std::vector<double> lattice_;
};

// Piecewise-linear tissue palette: dark red -> flesh -> pale pink.
void tissue_palette(double t, double& r, double& g, double& b) {
  static constexpr std::array<std::array<double, 3>, 3> kStops{{{0.42, 0.08, 0.11}, {0.78, 0.30, 0.33}, {0.95, 0.62, 0.64}}};
  t = std::clamp(t, 0.0, 1.0) * 2.0;
  const int i = std::min(static_cast<int>(t), 1);
  const double f = t - i;
  r = kStops[i][0] + f * (kStops[i + 1][0] - kStops[i][0]);
  g = kStops[i][1] + f * (kStops[i + 1][1] - kStops[i][1]);
  b = kStops[i][2] + f * (kStops[i + 1][2] - kStops[i][2]);
}

void hsv_adjust(Image& img, double hue_shift, double sat_scale, double val_scale) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double h, s, v, r, g, b;
      rgb_to_hsv(img.at(x, y, 0) / 255.0, img.at(x, y, 1) / 255.0, img.at(x, y, 2) / 255.0, h, s, v);
      hsv_to_rgb(h + hue_shift, std::clamp(s * sat_scale, 0.0, 1.0), std::clamp(v * val_scale, 0.0, 1.0), r, g, b);
      img.at(x, y, 0) = to_byte(255.0 * r);
      img.at(x, y, 1) = to_byte(255.0 * g);
      img.at(x, y, 2) = to_byte(255.0 * b);
    }
  }
}

}  // namespace

Image generate_background(std::uint64_t base_seed, Rng& jitter_rng, const CameraModel& camera,
                          const BackgroundConfig& config) {
  Rng base(base_seed);
  const ValueNoise coarse(base, 3);
  const ValueNoise fine(base, 7);
  const double contrast = base.uniform(0.6, 1.0);
  const double offset = base.uniform(-0.15, 0.15);

  Image img(camera.width(), camera.height(), 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double u = (x + 0.5) / img.width, v = (y + 0.5) / img.height;
      const double t = 0.5 + offset + contrast * (0.7 * coarse.sample(u, v) + 0.3 * fine.sample(u, v) - 0.5);
      double r, g, b;
      tissue_palette(t, r, g, b);
      img.at(x, y, 0) = to_byte(255.0 * r);
      img.at(x, y, 1) = to_byte(255.0 * g);
      img.at(x, y, 2) = to_byte(255.0 * b);
    }
  }

  const double hue = jitter_rng.uniform(-config.hue_jitter, config.hue_jitter);
  const double sat = 1.0 + jitter_rng.uniform(-config.saturation_jitter, config.saturation_jitter);
  const double val = 1.0 + jitter_rng.uniform(-config.brightness_jitter, config.brightness_jitter);
  if (hue != 0.0 || sat != 1.0 || val != 1.0) hsv_adjust(img, hue, sat, val);
  return img;
}

GeneratedSample generate_sample(std::uint64_t global_seed, std::uint64_t index, const DataGenConfig& config) {
  const std::uint64_t seed = record_seed(global_seed, index);
  Rng rng(seed);
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    const int count = rng.bernoulli(config.two_shaft_probability) ? 2 : 1;
    std::vector<ShaftPose> poses;
    for (int k = 0; k < count; ++k) poses.push_back(sample_pose(rng, config.ranges));
    const double light = rng.uniform(config.light_min, config.light_max);
    const std::uint64_t background_seed = rng.next_u64();
    const bool stripped = rng.bernoulli(config.pose_stripped_fraction);

    const bool too_close = std::any_of(poses.begin(), poses.end(), [&](const ShaftPose& p) {
      return camera_clearance(p, config.geometry) < config.min_clearance;
    });
    if (too_close) continue;

    const Image background = generate_background(background_seed, rng, config.camera, config.background);
    RenderedSample rendered = rasterize_scene(config.camera, poses, config.geometry, light, background);
    // Every shaft must be at least partly visible.
    if (std::any_of(rendered.masks.begin(), rendered.masks.end(), [](const Mask& m) { return m.empty(); })) continue;

    GeneratedSample out;
    out.record.index = index;
    out.record.seed = seed;
    for (int k = 0; k < count; ++k) {
      ShaftAnnotation ann;
      ann.bbox = *rendered.boxes[k];
      if (!stripped) ann.pose = poses[k];
      out.record.shafts.push_back(ann);
      if (rendered.masks[k] != rendered.silhouettes[k]) out.record.occluded = true;
    }
    out.image = std::move(rendered.image);
    out.masks = std::move(rendered.silhouettes);
    return out;
  }
  fail(ErrorCode::kConfig, "no renderable scene within " + std::to_string(config.max_retries) +
                               " attempts for record " + std::to_string(index) + "; check pose ranges and camera");
}

Image augment(const Image& image, Rng& rng, const AugmentationConfig& config) {
  Image out = image;
  const double hue = rng.uniform(-config.hue, config.hue);
  const double sat = 1.0 + rng.uniform(-config.saturation, config.saturation);
  const double val = 1.0 + rng.uniform(-config.brightness, config.brightness);
  const double contrast = 1.0 + rng.uniform(-config.contrast, config.contrast);
  const bool add_noise = rng.bernoulli(config.noise_probability);

  if (hue != 0.0 || sat != 1.0 || val != 1.0) hsv_adjust(out, hue, sat, val);
  if (contrast != 1.0) {
    double mean = 0.0;
    for (auto p : out.pixels) mean += p;
    mean /= static_cast<double>(out.pixels.size());
    for (auto& p : out.pixels) p = to_byte(mean + contrast * (p - mean));
  }
  if (add_noise) {
    const double a = config.noise_amplitude;
    for (auto& p : out.pixels) p = to_byte(p + rng.uniform(-a, a));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Manifest

namespace {

std::string image_name(std::uint64_t index) {
  char path_buf[64];
  std::snprintf(path_buf, sizeof(path_buf), "images/%06llu.png", static_cast<unsigned long long>(index));
  return path_buf;
}

std::string mask_name(std::uint64_t index, std::size_t k) {
  char path_buf[64];
  std::snprintf(path_buf, sizeof(path_buf), "masks/%06llu_%zu.png", static_cast<unsigned long long>(index), k);
  return path_buf;
}

}  // namespace

std::string record_to_json_line(const DatasetRecord& record) {
  json shafts = json::array();
  for (const auto& s : record.shafts) {
    json j;
    j["bbox"] = {s.bbox.x_min, s.bbox.y_min, s.bbox.x_max, s.bbox.y_max};
    if (s.pose) {
      j["pose"] = {{"x", s.pose->x}, {"y", s.pose->y}, {"z", s.pose->z}, {"pitch", s.pose->pitch}, {"yaw", s.pose->yaw}};
    } else {
      j["pose"] = nullptr;
    }
    j["mask"] = s.mask_path.empty() ? json(nullptr) : json(s.mask_path);
    shafts.push_back(std::move(j));
  }
  json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["index"] = record.index;
  j["seed"] = record.seed;
  j["image"] = record.image_path;
  j["occluded"] = record.occluded;
  j["shafts"] = std::move(shafts);
  return j.dump();
}

DatasetRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("corrupt manifest line: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) fail(ErrorCode::kSchema, "manifest line lacks schema_version");
  const int version = j["schema_version"].get<int>();
  if (version != kDatasetSchemaVersion) {
    fail(ErrorCode::kSchema, "unsupported dataset schema_version " + std::to_string(version) + " (expected " +
                                 std::to_string(kDatasetSchemaVersion) + ")");
  }
  try {
    DatasetRecord r;
    r.index = j.at("index").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.image_path = j.at("image").get<std::string>();
    r.occluded = j.value("occluded", false);
    for (const auto& s : j.at("shafts")) {
      ShaftAnnotation a;
      const auto& b = s.at("bbox");
      a.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
      if (s.contains("pose") && !s["pose"].is_null()) {
        const auto& p = s["pose"];
        a.pose = ShaftPose{p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
                           p.at("pitch").get<double>(), p.at("yaw").get<double>()};
      }
      if (s.contains("mask") && !s["mask"].is_null()) a.mask_path = s["mask"].get<std::string>();
      r.shafts.push_back(std::move(a));
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed manifest record: ") + e.what());
  }
}

DatasetWriter::DatasetWriter(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / "images", ec);
  if (!ec) std::filesystem::create_directories(root_ / "masks", ec);
  if (ec) fail(ErrorCode::kIo, "cannot create dataset directory '" + root_.string() + "': " + ec.message());
  std::ofstream manifest(root_ / "manifest.jsonl", std::ios::trunc);
  if (!manifest) fail(ErrorCode::kIo, "cannot write manifest in '" + root_.string() + "'");
}

void DatasetWriter::write(GeneratedSample& sample) {
  auto& rec = sample.record;
  rec.image_path = image_name(rec.index);
  write_png(root_ / rec.image_path, sample.image);
  for (std::size_t k = 0; k < rec.shafts.size(); ++k) {
    if (k < sample.masks.size()) {
      rec.shafts[k].mask_path = mask_name(rec.index, k);
      write_mask_png(root_ / rec.shafts[k].mask_path, sample.masks[k]);
    }
  }
  std::ofstream manifest(root_ / "manifest.jsonl", std::ios::app);
  manifest << record_to_json_line(rec) << '\n';
  if (!manifest) fail(ErrorCode::kIo, "failed appending to manifest in '" + root_.string() + "'");
  records_.push_back(rec);
}

void write_dataset(const std::filesystem::path& root, std::vector<GeneratedSample>& samples) {
  DatasetWriter writer(root);
  for (auto& s : samples) writer.write(s);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.jsonl";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::kIo, "missing dataset manifest '" + manifest_path.string() + "'");
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    DatasetRecord rec;
    try {
      rec = record_from_json_line(line);
    } catch (const Error& e) {
      fail(e.code(), manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto check = [&](const std::string& rel) {
      if (!std::filesystem::is_regular_file(root / rel)) {
        fail(ErrorCode::kIo, "record " + std::to_string(rec.index) + " references missing file '" +
                                 (root / rel).string() + "'");
      }
    };
    check(rec.image_path);
    for (const auto& s : rec.shafts) {
      if (!s.mask_path.empty()) check(s.mask_path);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace shaftpose
