#include <cmath>
#include <fstream>
#include <map>

#include <doctest.h>

#include "../support/oracles.hpp"
#include "../support/tmpdir.hpp"
#include "detector/checkpoint.hpp"
#include "detector/loss.hpp"
#include "detector/trainer.hpp"
#include "error.hpp"
#include "rng.hpp"

using namespace shaftpose;
using doctest::Approx;
using testing_support::TempDir;

namespace {

ModelConfig tiny_model(Variant v) {
  ModelConfig m;
  m.backbone.input_size = 32;
  m.backbone.levels = {8, 4, 2};
  m.backbone.channels = 8;
  m.backbone.stem_channels = 4;
  m.pose_hidden = 8;
  m.variant = v;
  return m;
}

DataGenConfig tiny_data() {
  DataGenConfig d;
  d.camera = CameraModel(32, 32, 95.0);
  return d;
}

std::vector<TrainItem> tiny_items(const ModelConfig& m, int count, double stripped = 0.0, std::uint64_t seed = 1) {
  DataGenConfig d = tiny_data();
  d.pose_stripped_fraction = stripped;
  const AnchorSet anchors = build_anchors(m);
  std::vector<TrainItem> items;
  for (int i = 0; i < count; ++i) {
    auto s = generate_sample(seed, i, d);
    items.push_back(make_train_item(s.image, s.record, anchors, d.ranges, 0.5));
  }
  return items;
}

Box random_box(Rng& rng, double extent) {
  const double x = rng.uniform(0, extent), y = rng.uniform(0, extent);
  return {x, y, x + rng.uniform(0.5, extent / 2), y + rng.uniform(0.5, extent / 2)};
}

}  // namespace

TEST_CASE("box_iou examples") {
  const Box a{0, 0, 10, 10};
  CHECK(box_iou(a, a) == 1.0);
  CHECK(box_iou(a, {20, 20, 30, 30}) == 0.0);
  CHECK(box_iou(a, {10, 0, 20, 10}) == 0.0);
  CHECK(box_iou(a, {5, 5, 15, 15}) == Approx(25.0 / 175.0).epsilon(1e-15));
  CHECK(oracle::pixel_box_iou(a, {5, 5, 15, 15}) == Approx(25.0 / 175.0).epsilon(1e-15));
  CHECK(box_iou(a, {3, 3, 3, 8}) == 0.0);
}

TEST_CASE("box_iou equals the pixel-count oracle on integer boxes") {
  Rng rng(21);
  for (int t = 0; t < 2000; ++t) {
    auto ib = [&] {
      const int x = static_cast<int>(rng.below(20)), y = static_cast<int>(rng.below(20));
      return Box{double(x), double(y), double(x + 1 + rng.below(12)), double(y + 1 + rng.below(12))};
    };
    const Box a = ib(), b = ib();
    CHECK(std::abs(box_iou(a, b) - oracle::pixel_box_iou(a, b)) <= 1e-12);
    CHECK(box_iou(a, b) == box_iou(b, a));
  }
}

TEST_CASE("encode/decode examples and round trip") {
  const Box anchor{10, 10, 20, 30};
  for (double v : encode_box(anchor, anchor)) CHECK(v == 0.0);
  const auto twice = encode_box({5, 0, 25, 40}, anchor);
  CHECK(twice[0] == 0.0);
  CHECK(twice[1] == 0.0);
  CHECK(twice[2] == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(twice[3] == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(encode_box({1, 1, 1, 5}, anchor), Error);

  Rng rng(3);
  double worst = 0;
  for (int t = 0; t < 100000; ++t) {
    const Box g = random_box(rng, 64), a = random_box(rng, 64);
    const Box d = decode_box(encode_box(g, a), a);
    worst = std::max({worst, std::abs(d.x_min - g.x_min), std::abs(d.y_min - g.y_min), std::abs(d.x_max - g.x_max),
                      std::abs(d.y_max - g.y_max)});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("default anchor layout") {
  const ModelConfig m;
  const AnchorSet a = build_anchors(m);
  CHECK(a.size() == 4u * (16 * 16 + 8 * 8 + 4 * 4 + 2 * 2));
  CHECK(a.size() == 1360u);
  for (const Box& b : a.boxes) {
    CHECK(b.width() > 0);
    CHECK(b.height() > 0);
    CHECK(b.width() <= 64);
    CHECK(b.height() <= 64);
    const double cx = 0.5 * (b.x_min + b.x_max), cy = 0.5 * (b.y_min + b.y_max);
    CHECK(cx > 0);
    CHECK(cx < 64);
    CHECK(cy > 0);
    CHECK(cy < 64);
  }
  // Level scales run linearly from 0.2 to 0.9.
  const auto& first = a.boxes[a.levels[0].offset];
  const auto& last = a.boxes[a.levels[3].offset];
  CHECK(first.width() == Approx(0.2 * 64));
  CHECK(last.width() == Approx(0.9 * 64));
  CHECK(a.boxes[a.levels[0].offset + 3].width() == Approx(std::sqrt(0.2 * (0.2 + 0.7 / 3)) * 64));
}

TEST_CASE("single-level single-cell anchor is centred and square") {
  AnchorConfig c;
  c.aspect_ratios = {1.0};
  c.extra_square = false;
  const int levels[] = {1};
  const AnchorSet a = build_anchors(10, levels, c);
  REQUIRE(a.size() == 1);
  CHECK(a.boxes[0] == Box{4, 4, 6, 6});
}

TEST_CASE("anchor index and location are inverse bijections") {
  const AnchorSet a = build_anchors(ModelConfig{});
  std::size_t expect = 0;
  for (int k = 0; k < 4; ++k) {
    const auto& l = a.levels[k];
    for (int y = 0; y < l.size; ++y)
      for (int x = 0; x < l.size; ++x)
        for (int b = 0; b < l.per_location; ++b, ++expect) {
          const AnchorLocation loc{k, y, x, b};
          CHECK(a.index(loc) == expect);
          CHECK(a.locate(expect) == loc);
        }
  }
  CHECK(expect == a.size());
  CHECK_THROWS_AS(a.locate(a.size()), Error);
}

TEST_CASE("match_anchors examples") {
  const std::vector<Box> anchors{{0, 0, 10, 10}, {5, 5, 15, 15}, {40, 40, 50, 50}};
  const std::vector<Box> one{{0, 0, 10, 10}};
  const auto m = match_anchors(anchors, one, 0.5);
  CHECK(m.gt_index[0] == 0);
  CHECK(m.iou[0] == 1.0);
  CHECK(m.gt_index[1] == -1);
  CHECK(m.gt_index[2] == -1);
  const auto none = match_anchors(anchors, std::vector<Box>{}, 0.5);
  CHECK(none.positives() == 0);
  // A gt overlapping nothing well is force-matched to its best anchor.
  const auto forced = match_anchors(anchors, std::vector<Box>{{44, 44, 60, 60}}, 0.5);
  CHECK(forced.gt_index[2] == 0);
  CHECK(forced.positives() == 1);
  CHECK_THROWS_AS(match_anchors(anchors, one, 1.0), Error);
}

TEST_CASE("match_anchors equals the brute-force matcher") {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    std::vector<Box> anchors, gts;
    for (int i = 0; i < 200; ++i) anchors.push_back(random_box(rng, 40));
    for (int i = 0; i < 3; ++i) gts.push_back(random_box(rng, 40));
    if (t % 10 == 0) gts.push_back(anchors[rng.below(anchors.size())]);  // exact-overlap ties
    CHECK(match_anchors(anchors, gts, 0.5).gt_index == oracle::match(anchors, gts, 0.5));
  }
}

TEST_CASE("hard negative mining examples") {
  std::vector<double> loss(22);
  std::vector<std::uint8_t> pos(22, 0);
  for (int i = 0; i < 22; ++i) loss[i] = (i * 7) % 22;
  pos[0] = pos[1] = 1;
  const auto sel = hard_negative_mine(loss, pos, 3.0);
  CHECK(std::count(sel.begin(), sel.end(), 1) == 6);
  std::vector<double> neg_losses;
  for (int i = 0; i < 22; ++i)
    if (!pos[i]) neg_losses.push_back(loss[i]);
  std::sort(neg_losses.rbegin(), neg_losses.rend());
  for (int i = 0; i < 22; ++i) {
    if (sel[i]) {
      CHECK_FALSE(pos[i]);
      CHECK(loss[i] >= neg_losses[5]);
    }
  }

  std::vector<std::uint8_t> nopos(22, 0);
  const auto floor1 = hard_negative_mine(loss, nopos, 3.0);
  CHECK(std::count(floor1.begin(), floor1.end(), 1) == 3);

  const std::vector<double> l6{1, 2, 3, 4, 5, 6};
  const std::vector<std::uint8_t> p6{1, 1, 0, 0, 0, 0};
  const auto all = hard_negative_mine(l6, p6, 3.0);
  CHECK(all == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1});
}

TEST_CASE("build_targets") {
  const ModelConfig mc;
  const AnchorSet anchors = build_anchors(mc);
  const PoseRanges ranges;
  const std::vector<Box> none;
  const auto empty = build_targets(anchors, match_anchors(anchors.boxes, none), none,
                                   std::optional<std::vector<ShaftPose>>(std::vector<ShaftPose>{}), ranges);
  CHECK(empty.positives() == 0);
  for (const auto& p : *empty.pose)
    for (double v : p) CHECK(v == 0.0);

  const std::vector<Box> gts{anchors.boxes[anchors.index({1, 3, 4, 0})]};
  const auto m = match_anchors(anchors.boxes, gts);
  const std::vector<ShaftPose> mid{{0, 0, 25, 70, 179}};
  const auto t = build_targets(anchors, m, gts, mid, ranges);
  const std::size_t a = anchors.index({1, 3, 4, 0});
  CHECK(t.positive[a] == 1);
  for (double v : t.box[a]) CHECK(v == 0.0);
  for (double v : (*t.pose)[a]) CHECK(v == 0.0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!t.positive[i]) {
      for (double v : t.box[i]) CHECK(v == 0.0);
    }
  }

  const auto unlabeled = build_targets(anchors, m, gts, std::nullopt, ranges);
  CHECK_FALSE(unlabeled.pose.has_value());
  CHECK(unlabeled.positive == t.positive);
  CHECK_THROWS_AS(build_targets(anchors, m, gts, std::nullopt, ranges, true), Error);
}

TEST_CASE("head output shapes and pose codomain") {
  for (Variant v : {Variant::kC, Variant::kD}) {
    const ModelConfig mc = tiny_model(v);
    DetectorModel<float> model(mc, 5);
    const auto items = tiny_items(mc, 3);
    std::vector<const Image*> imgs;
    for (const auto& it : items) imgs.push_back(&it.image);
    nn::Tensor<float> batch;
    images_to_tensor<float>(imgs, 32, batch);
    model.forward(batch);
    std::size_t total = 0;
    for (std::size_t k = 0; k < model.levels(); ++k) {
      const auto o = model.outputs(k);
      const int s = mc.backbone.levels[k];
      const int n = model.anchors().levels[k].per_location;
      CHECK(o.cls->shape() == nn::Shape{3, s, s, 2 * n});
      CHECK(o.box->shape() == nn::Shape{3, s, s, 4 * n});
      CHECK(o.pose->shape() == nn::Shape{3, s, s, 5 * n});
      CHECK(o.cls->shape().c + o.box->shape().c + o.pose->shape().c == (2 + 4 + 5) * n);
      for (float p : o.pose->values()) {
        CHECK(p > -1.0f);
        CHECK(p < 1.0f);
      }
      total += static_cast<std::size_t>(s) * s * n;
    }
    CHECK(total == model.anchors().size());
    nn::Tensor<float> wrong({1, 16, 16, 3});
    CHECK_THROWS_AS(model.forward(wrong), Error);
  }
}

TEST_CASE("variant D with the fusion inputs severed matches variant C on class and box maps") {
  DetectorModel<double> c(tiny_model(Variant::kC), 9), d(tiny_model(Variant::kD), 9);
  copy_weights(d, c);
  // Zero the fused-pose weights reading class logits and box offsets.
  const int feat = tiny_model(Variant::kD).backbone.channels;
  for (auto& p : d.parameters()) {
    if (p.name.find("pose_fuse.conv.weight") == std::string::npos) continue;
    const auto s = p.tensor->shape();  // {k, k, in, out}
    for (int ky = 0; ky < s.n; ++ky)
      for (int kx = 0; kx < s.h; ++kx)
        for (int i = feat; i < s.w; ++i)
          for (int o = 0; o < s.c; ++o) p.tensor->at(ky, kx, i, o) = 0.0;
  }
  nn::Tensor<double> x({2, 32, 32, 3});
  Rng rng(1);
  for (auto& v : x.values()) v = rng.uniform(-2, 2);
  c.forward(x);
  d.forward(x);
  std::vector<double> pose_before;
  for (std::size_t k = 0; k < c.levels(); ++k) {
    CHECK(c.outputs(k).cls->shape() == d.outputs(k).cls->shape());
    CHECK(c.outputs(k).pose->shape() == d.outputs(k).pose->shape());
    for (std::size_t i = 0; i < c.outputs(k).cls->size(); ++i) CHECK((*c.outputs(k).cls)[i] == (*d.outputs(k).cls)[i]);
    for (std::size_t i = 0; i < c.outputs(k).box->size(); ++i) CHECK((*c.outputs(k).box)[i] == (*d.outputs(k).box)[i]);
    for (double v : d.outputs(k).pose->values()) pose_before.push_back(v);
  }
  // With the fusion severed, perturbing the class/box heads leaves D's pose map unchanged.
  for (auto& p : d.parameters()) {
    if (p.name.find(".cls.") != std::string::npos || p.name.find(".box.") != std::string::npos) {
      for (auto& v : p.tensor->values()) v += 0.5;
    }
  }
  d.forward(x);
  std::vector<double> pose_after;
  for (std::size_t k = 0; k < d.levels(); ++k)
    for (double v : d.outputs(k).pose->values()) pose_after.push_back(v);
  CHECK(pose_after == pose_before);
}

namespace {

// One positive at anchor 0 of a tiny model whose maps are overwritten with chosen values.
struct LossFixture {
  ModelConfig mc = tiny_model(Variant::kC);
  DetectorModel<double> model{mc, 2};
  ImageTargets targets;

  LossFixture() {
    nn::Tensor<double> x({1, 32, 32, 3});
    model.forward(x);
    const std::size_t na = model.anchors().size();
    targets.positive.assign(na, 0);
    targets.box.assign(na, {0, 0, 0, 0});
    targets.pose.emplace(na, NormalizedPose{});
    targets.positive[0] = 1;
    targets.box[0] = {0.1, -0.2, 0.3, 0.05};
    (*targets.pose)[0] = {0.2, -0.4, 0.1, 0.0, 0.5};
    // Perfect predictions: confident logits, exact box and pose.
    const auto addr = anchor_addresses(model.anchors());
    for (std::size_t a = 0; a < na; ++a) {
      auto& cls = model.cls_map(addr[a].level);
      cls[map_index(cls, 0, addr[a], 2, 0)] = targets.positive[a] ? -30 : 30;
      cls[map_index(cls, 0, addr[a], 2, 1)] = targets.positive[a] ? 30 : -30;
      auto& box = model.box_map(addr[a].level);
      for (int d = 0; d < 4; ++d) box[map_index(box, 0, addr[a], 4, d)] = targets.box[a][d];
      auto& pose = model.pose_map(addr[a].level);
      for (int p = 0; p < 5; ++p) pose[map_index(pose, 0, addr[a], 5, p)] = (*targets.pose)[a][p];
    }
  }
  double& pose_value(int p) {
    const auto addr = anchor_addresses(model.anchors());
    auto& pose = model.pose_map(addr[0].level);
    return pose.values()[map_index(pose, 0, addr[0], 5, p)];
  }
  LossBreakdown loss(const LossConfig& cfg = {}) {
    auto maps = head_maps(model);
    return total_loss<double>(model.anchors(), maps, std::span<const ImageTargets>(&targets, 1), cfg, false);
  }
};

}  // namespace

TEST_CASE("total_loss: perfect predictions") {
  LossFixture f;
  const auto l = f.loss();
  CHECK(l.bbox == 0.0);
  CHECK(l.pose == 0.0);
  CHECK(l.conf < 1e-20);
  CHECK(l.n == 1);
  CHECK(l.positives == 1);
}

TEST_CASE("total_loss: closed-form pose term and normalisation") {
  LossFixture f;
  const LossConfig cfg;
  for (int p = 0; p < 5; ++p) {
    LossFixture g;
    g.pose_value(p) += 0.1;  // gamma * 0.1 = 0.5
    const auto l = g.loss(cfg);
    CHECK(l.pose == Approx(cfg.beta[p] * 0.125).epsilon(1e-12));
    CHECK(l.total == Approx((l.conf + cfg.alpha * l.bbox + l.pose) / l.n).epsilon(1e-15));
  }
  // Scaling gamma scales each residual exactly.
  LossFixture g;
  g.pose_value(2) += 0.03;
  LossConfig c2 = cfg;
  c2.gamma = 3 * cfg.gamma;
  auto maps = head_maps(g.model);
  const auto r1 = pose_residuals<double>(g.model.anchors(), maps, std::span<const ImageTargets>(&g.targets, 1), cfg);
  const auto r2 = pose_residuals<double>(g.model.anchors(), maps, std::span<const ImageTargets>(&g.targets, 1), c2);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r2[i] == Approx(3 * r1[i]).epsilon(1e-15));
}

TEST_CASE("total_loss: n floors at one and pose-unlabelled items contribute no pose loss") {
  LossFixture f;
  f.targets.positive.assign(f.targets.positive.size(), 0);
  const auto l = f.loss();
  CHECK(l.n == 1);
  CHECK(l.positives == 0);
  CHECK(l.pose == 0.0);

  LossFixture g;
  g.pose_value(0) += 0.7;
  CHECK(g.loss().pose > 0.0);
  g.targets.pose.reset();
  CHECK(g.loss().pose == 0.0);
}

TEST_CASE("total_loss is invariant under batch permutation") {
  const ModelConfig mc = tiny_model(Variant::kD);
  const auto items = tiny_items(mc, 4);
  DetectorModel<double> model(mc, 3);
  auto run = [&](const std::vector<int>& order) {
    std::vector<const Image*> imgs;
    std::vector<ImageTargets> t;
    for (int i : order) {
      imgs.push_back(&items[i].image);
      t.push_back(items[i].targets);
    }
    nn::Tensor<double> x;
    images_to_tensor<double>(imgs, 32, x);
    model.set_training(false);
    model.forward(x);
    auto maps = head_maps(model);
    return total_loss<double>(model.anchors(), maps, t, LossConfig{}, false);
  };
  const auto a = run({0, 1, 2, 3}), b = run({2, 0, 3, 1});
  CHECK(a.pose == Approx(b.pose).epsilon(1e-12));
  CHECK(a.conf == Approx(b.conf).epsilon(1e-12));
  CHECK(a.bbox == Approx(b.bbox).epsilon(1e-12));
}

TEST_CASE("loss switching: pose-unlabelled batches give exactly zero pose-branch gradient") {
  for (Variant v : {Variant::kC, Variant::kD}) {
    const ModelConfig mc = tiny_model(v);
    const auto items = tiny_items(mc, 4, 1.0);
    DetectorModel<float> model(mc, 4);
    std::vector<const Image*> imgs;
    std::vector<ImageTargets> t;
    for (const auto& it : items) {
      REQUIRE_FALSE(it.targets.pose.has_value());
      imgs.push_back(&it.image);
      t.push_back(it.targets);
    }
    nn::Tensor<float> x;
    images_to_tensor<float>(imgs, 32, x);
    model.forward(x);
    model.zero_grad();
    auto maps = head_maps(model);
    total_loss<float>(model.anchors(), maps, t, LossConfig{}, true);
    model.backward();
    double pose_abs = 0, other_abs = 0;
    for (auto& p : model.parameters()) {
      double s = 0;
      for (float g : p.tensor->grads()) s += std::abs(g);
      (is_pose_parameter(p.name) ? pose_abs : other_abs) += s;
    }
    CHECK(pose_abs == 0.0);
    CHECK(other_abs > 0.0);
  }
}

TEST_CASE("training on pose-unlabelled items leaves pose-branch weights bit-unchanged") {
  const ModelConfig mc = tiny_model(Variant::kD);
  auto data = std::make_shared<std::vector<TrainItem>>(tiny_items(mc, 8, 1.0));
  TrainConfig cfg;
  cfg.model = mc;
  cfg.batch_size = 4;
  Trainer tr(cfg, data);
  std::map<std::string, std::vector<float>> before;
  for (auto& p : tr.model().parameters()) before[p.name].assign(p.tensor->values().begin(), p.tensor->values().end());
  tr.step();
  bool other_changed = false;
  for (auto& p : tr.model().parameters()) {
    const std::vector<float> now(p.tensor->values().begin(), p.tensor->values().end());
    if (is_pose_parameter(p.name)) {
      CHECK_MESSAGE(now == before[p.name], p.name);
    } else {
      other_changed = other_changed || now != before[p.name];
    }
  }
  CHECK(other_changed);
}

TEST_CASE("overfitting a fixed batch lowers the loss") {
  const ModelConfig mc = tiny_model(Variant::kD);
  auto items = tiny_items(mc, 4);
  auto data = std::make_shared<std::vector<TrainItem>>(items);
  TrainConfig cfg;
  cfg.model = mc;
  cfg.batch_size = 4;
  cfg.augment = false;
  cfg.schedule.total_steps = 1000;
  Trainer tr(cfg, data);
  const double first = tr.step().loss.total;
  double last = first;
  for (int s = 1; s < 50; ++s) last = tr.step().loss.total;
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic and batches follow per-epoch permutations") {
  const ModelConfig mc = tiny_model(Variant::kC);
  auto data = std::make_shared<std::vector<TrainItem>>(tiny_items(mc, 10));
  TrainConfig cfg;
  cfg.model = mc;
  cfg.batch_size = 4;
  auto trace = [&] {
    Trainer tr(cfg, data);
    std::vector<double> out;
    for (int s = 0; s < 6; ++s) out.push_back(tr.step().loss.total);
    return out;
  };
  CHECK(trace() == trace());

  Trainer tr(cfg, data);
  std::vector<std::size_t> seen;
  for (int s = 0; s < 5; ++s) {
    const auto b = tr.batch_indices(s);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  for (int e = 0; e < 2; ++e) {
    std::vector<std::size_t> epoch(seen.begin() + 10 * e, seen.begin() + 10 * (e + 1));
    std::sort(epoch.begin(), epoch.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(epoch[i] == i);
  }
}

TEST_CASE("checkpoint round trip, resume and mismatch errors") {
  TempDir dir("ckpt");
  const ModelConfig mc = tiny_model(Variant::kD);
  auto data = std::make_shared<std::vector<TrainItem>>(tiny_items(mc, 6));
  TrainConfig cfg;
  cfg.model = mc;
  cfg.batch_size = 3;
  cfg.schedule.total_steps = 10;

  Trainer full(cfg, data);
  std::vector<double> ref;
  for (int s = 0; s < 6; ++s) {
    ref.push_back(full.step().loss.total);
    if (s == 2) full.save(dir / "mid.ckpt");
  }

  const Checkpoint ck = read_checkpoint(dir / "mid.ckpt");
  CHECK(ck.step == 3);
  CHECK(ck.descriptor == mc.descriptor());
  CHECK(ModelConfig::from_descriptor(ck.descriptor) == mc);
  CHECK(ck.blobs.count("adam.m/head0.pose.weight") == 1);

  Trainer resumed(cfg, data);
  resumed.resume(dir / "mid.ckpt");
  CHECK(resumed.steps_done() == 3);
  for (int s = 3; s < 6; ++s) CHECK(resumed.step().loss.total == ref[s]);
  auto pa = full.model().parameters(), pb = resumed.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].tensor->values().begin(), pa[i].tensor->values().end(), pb[i].tensor->values().begin()));
  }

  DetectorModel<float> other(tiny_model(Variant::kC), 0);
  try {
    load_weights(other, ck);
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArchitectureMismatch);
    CHECK(std::string(e.what()).find("\"variant\":\"C\"") != std::string::npos);
    CHECK(std::string(e.what()).find("\"variant\":\"D\"") != std::string::npos);
  }

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  try {
    read_checkpoint(dir / "junk.ckpt");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchema);
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), Error);
}
