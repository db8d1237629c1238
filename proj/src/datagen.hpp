#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"
#include "renderer.hpp"
#include "rng.hpp"

namespace shaftpose {

// Photometric jitter half-widths. Hue in degrees; the others are relative factors.
struct AugmentationConfig {
  double hue = 8.0;
  double saturation = 0.2;
  double brightness = 0.2;
  double contrast = 0.2;
  double noise_amplitude = 10.0;  // on the 0..255 scale
  double noise_probability = 0.5;

  void validate() const;
};

struct BackgroundConfig {
  double hue_jitter = 10.0;  // degrees
  double saturation_jitter = 0.15;
  double brightness_jitter = 0.2;
};

struct DataGenConfig {
  CameraModel camera{64, 64, 95.0};
  PoseRanges ranges;
  ShaftGeometry geometry;
  BackgroundConfig background;
  double two_shaft_probability = 0.5;
  double pose_stripped_fraction = 0.0;
  double light_min = 0.6;
  double light_max = 1.4;
  // Minimum distance between camera and shaft surface, mm. Closer shafts are resampled.
  double min_clearance = 1.0;
  int max_retries = 100;

  void validate() const;
};

struct ShaftAnnotation {
  Box bbox;
  std::optional<ShaftPose> pose;  // absent for pose-stripped records
  std::string mask_path;          // relative to the dataset root; empty if not stored

  bool operator==(const ShaftAnnotation&) const = default;
};

struct DatasetRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::string image_path;  // relative to the dataset root
  std::vector<ShaftAnnotation> shafts;
  bool occluded = false;  // two shafts whose silhouettes overlap

  bool pose_labeled() const;
  bool operator==(const DatasetRecord&) const = default;
};

// A record plus its pixels. masks[k] is the full silhouette of shaft k (not occlusion-clipped),
// so bbox == mask_to_bbox(mask) and render_silhouette(pose) == mask hold for every shaft.
struct GeneratedSample {
  DatasetRecord record;
  Image image;
  std::vector<Mask> masks;
};

std::uint64_t record_seed(std::uint64_t global_seed, std::uint64_t index);

ShaftPose sample_pose(Rng& rng, const PoseRanges& ranges);

// Value-noise tissue texture from `base_seed`, then HSV jitter drawn from `jitter_rng`.
Image generate_background(std::uint64_t base_seed, Rng& jitter_rng, const CameraModel& camera,
                          const BackgroundConfig& config);

// Throws Error(kConfig) when no valid scene is found within max_retries attempts.
GeneratedSample generate_sample(std::uint64_t global_seed, std::uint64_t index, const DataGenConfig& config);

Image augment(const Image& image, Rng& rng, const AugmentationConfig& config);

// HSV helpers on [0,1] RGB; hue in degrees [0,360).
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

// On-disk dataset: manifest.jsonl + images/NNNNNN.png + masks/NNNNNN_k.png.
inline constexpr int kDatasetSchemaVersion = 1;

class DatasetWriter {
 public:
  explicit DatasetWriter(std::filesystem::path root);
  // Writes image and masks, fills in relative paths, appends to the manifest.
  void write(GeneratedSample& sample);
  const std::vector<DatasetRecord>& records() const { return records_; }

 private:
  std::filesystem::path root_;
  std::vector<DatasetRecord> records_;
};

void write_dataset(const std::filesystem::path& root, std::vector<GeneratedSample>& samples);

// Validates the schema version and that every referenced file exists.
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& root);

std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(const std::string& line);

}  // namespace shaftpose
