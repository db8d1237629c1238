#include "report.hpp"

#include <cstdio>

#include <json.hpp>

#include "../error.hpp"

namespace shaftpose {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kDimNames[kPoseDims] = {"x", "y", "z", "pitch", "yaw"};

ordered_json pose_json(const ShaftPose& p) {
  return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"pitch", p.pitch}, {"yaw", p.yaw}};
}

ordered_json box_json(const Box& b) { return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

ordered_json errors_json(const PoseErrors& e) {
  ordered_json mae;
  for (std::size_t p = 0; p < kPoseDims; ++p) mae[kDimNames[p]] = e.mae[p];
  return {{"mae", mae}, {"matched", e.matched}, {"unmatched", e.unmatched}};
}

ordered_json detection_json(const Detection& d) {
  return {{"bbox", box_json(d.bbox)}, {"score", d.score}, {"pose", pose_json(d.pose)}, {"anchor", d.anchor}};
}

}  // namespace

EvalSet load_eval_set(const std::filesystem::path& root) {
  EvalSet set;
  set.records = read_dataset(root);
  for (const auto& r : set.records) {
    set.images.push_back(read_png(root / r.image_path));
    ImageTruths truths;
    std::vector<Mask> masks;
    for (const auto& s : r.shafts) {
      truths.push_back({s.bbox, s.pose});
      if (s.mask_path.empty()) {
        set.has_masks = false;
      } else {
        masks.push_back(read_mask_png(root / s.mask_path));
      }
    }
    set.truths.push_back(std::move(truths));
    set.masks.push_back(std::move(masks));
  }
  return set;
}

EvalReport summarize(std::span<const ImageDetections> detections, const EvalSet& set, const EvalOptions& options) {
  EvalReport r;
  r.images = set.truths.size();
  for (std::size_t i = 0; i < set.truths.size(); ++i) {
    r.detections += detections[i].size();
    for (const auto& gt : set.truths[i]) {
      ++r.gts;
      if (gt.pose) ++r.pose_gts;
    }
  }
  r.map = average_precision(detections, set.truths, options.iou_threshold);
  r.detected_rate = detected_rate(detections, set.truths, options.iou_threshold);
  r.detected = static_cast<std::size_t>(std::llround(r.detected_rate * static_cast<double>(r.gts)));
  r.missed = r.gts - r.detected;
  r.pose = pose_error_report(detections, set.truths, options.iou_threshold);
  r.baseline = midpoint_baseline(set.truths, options.ranges);
  if (set.has_masks) {
    r.rerender_iou = rerender_iou(detections, set.truths, set.masks, options.camera, options.geometry,
                                  options.iou_threshold);
    r.has_rerender = true;
  }
  return r;
}

EvalReport evaluate(DetectorModel<float>& model, const EvalSet& set, const EvalOptions& options,
                    std::vector<ImageDetections>* detections_out) {
  std::vector<const Image*> images;
  for (const auto& img : set.images) images.push_back(&img);
  auto dets = detect(model, images, options.detect, options.ranges);
  auto report = summarize(dets, set, options);
  if (detections_out) *detections_out = std::move(dets);
  return report;
}

std::string report_json(const EvalReport& r) {
  ordered_json j;
  j["map"] = r.map;
  j["detected_rate"] = r.detected_rate;
  j["pose_error"] = errors_json(r.pose);
  j["baseline_pose_error"] = errors_json(r.baseline);
  j["rerender_iou"] = r.has_rerender ? ordered_json(r.rerender_iou) : ordered_json(nullptr);
  j["counts"] = {{"images", r.images},         {"gts", r.gts},         {"pose_gts", r.pose_gts},
                 {"detections", r.detections}, {"detected", r.detected}, {"missed", r.missed}};
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-10s %8s %9s %8s %8s %8s %8s %8s\n", "", "mAP", "detected", "x", "y",
                "z", "pitch", "yaw");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %8.4f %9.4f %8.3f %8.3f %8.3f %8.3f %8.3f\n", "model", r.map,
                r.detected_rate, r.pose.mae[0], r.pose.mae[1], r.pose.mae[2], r.pose.mae[3], r.pose.mae[4]);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %8s %9s %8.3f %8.3f %8.3f %8.3f %8.3f\n", "midpoint", "-", "-",
                r.baseline.mae[0], r.baseline.mae[1], r.baseline.mae[2], r.baseline.mae[3], r.baseline.mae[4]);
  out += buf;
  out += "pose MAE units: x, y, z in mm; pitch, yaw in degrees\n";
  if (r.has_rerender) {
    std::snprintf(buf, sizeof(buf), "rerender IoU %.4f\n", r.rerender_iou);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "images %zu  gts %zu  detected %zu  missed %zu  detections %zu\n", r.images, r.gts,
                r.detected, r.missed, r.detections);
  out += buf;
  return out;
}

std::string per_image_jsonl(const EvalSet& set, std::span<const ImageDetections> detections, double iou_threshold) {
  std::string out;
  for (std::size_t i = 0; i < set.truths.size(); ++i) {
    ordered_json j;
    j["index"] = set.records.empty() ? i : set.records[i].index;
    ordered_json gts = ordered_json::array();
    for (const auto& gt : set.truths[i]) {
      bool hit = false;
      for (const auto& d : detections[i]) hit = hit || box_iou(d.bbox, gt.bbox) >= iou_threshold;
      gts.push_back({{"bbox", box_json(gt.bbox)},
                     {"pose", gt.pose ? pose_json(*gt.pose) : ordered_json(nullptr)},
                     {"detected", hit}});
    }
    j["gts"] = std::move(gts);
    ordered_json dets = ordered_json::array();
    for (const auto& d : detections[i]) dets.push_back(detection_json(d));
    j["detections"] = std::move(dets);
    out += j.dump() + "\n";
  }
  return out;
}

std::string detections_json(const ImageDetections& detections) {
  ordered_json j = ordered_json::array();
  for (const auto& d : detections) j.push_back(detection_json(d));
  return ordered_json{{"detections", j}}.dump(2) + "\n";
}

ImageDetections detections_from_json(const std::string& text) {
  ImageDetections out;
  try {
    const json j = json::parse(text);
    for (const auto& d : j.at("detections")) {
      Detection det;
      const auto& b = d.at("bbox");
      det.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
      det.score = d.at("score").get<double>();
      const auto& p = d.at("pose");
      det.pose = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
                  p.at("pitch").get<double>(), p.at("yaw").get<double>()};
      det.anchor = d.at("anchor").get<std::size_t>();
      out.push_back(det);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed detections JSON: ") + e.what());
  }
  return out;
}

}  // namespace shaftpose
