#include "gradcheck_suite.hpp"

#include <cstdio>
#include <functional>
#include <memory>

#include "detector/loss.hpp"
#include "detector/model.hpp"
#include "error.hpp"
#include "nn/grad_check.hpp"
#include "nn/layers.hpp"
#include "nn/losses.hpp"
#include "rng.hpp"

namespace shaftpose {

namespace {

using nn::Shape;
using Tensor = nn::Tensor<double>;

constexpr double kOpTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;

struct Case {
  nn::Computation f;
  std::vector<double> inputs;
  std::vector<std::size_t> indices;  // empty: all
};

using CaseFactory = std::function<Case(Rng&)>;

struct OpSpec {
  std::string name;
  double tolerance;
  int trials;  // 0: use options.trials
  CaseFactory make;
};

void fill_random(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
}

Shape random_shape(Rng& rng, int max_c = 4) {
  return {1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(6)),
          1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_c)))};
}

// Scalar objective sum_i r_i * y_i over the outputs of a layer with tensor inputs `ins` (the
// checked variables, together with `params`).
struct LayerState {
  std::vector<Tensor> ins;
  std::vector<Tensor*> params;
  Tensor out;
  std::vector<double> r;
  std::function<void(LayerState&)> forward;
  std::function<void(LayerState&)> backward;
  std::shared_ptr<void> keep;  // owns the layer object
};

std::vector<Tensor*> variables(LayerState& s) {
  std::vector<Tensor*> v;
  for (auto& t : s.ins) v.push_back(&t);
  v.insert(v.end(), s.params.begin(), s.params.end());
  return v;
}

Case layer_case(std::shared_ptr<LayerState> s, Rng& rng) {
  s->forward(*s);
  s->r.resize(s->out.size());
  for (auto& v : s->r) v = rng.uniform(-1.0, 1.0);
  Case c;
  for (auto* t : variables(*s)) c.inputs.insert(c.inputs.end(), t->values().begin(), t->values().end());
  c.f = [s](std::span<const double> x, std::span<double> grad) {
    auto vars = variables(*s);
    std::size_t off = 0;
    for (auto* t : vars) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(off), t->size(), t->values().begin());
      off += t->size();
    }
    s->forward(*s);
    double loss = 0.0;
    for (std::size_t i = 0; i < s->out.size(); ++i) loss += s->r[i] * s->out[i];
    if (!grad.empty()) {
      for (auto* t : vars) t->zero_grad();
      s->out.zero_grad();
      std::copy(s->r.begin(), s->r.end(), s->out.grads().begin());
      s->backward(*s);
      off = 0;
      for (auto* t : vars) {
        std::copy(t->grads().begin(), t->grads().end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
        off += t->size();
      }
    }
    return loss;
  };
  return c;
}

CaseFactory conv_case(int kernel, int stride) {
  return [kernel, stride](Rng& rng) {
    auto s = std::make_shared<LayerState>();
    const Shape in = random_shape(rng);
    const int out_c = 1 + static_cast<int>(rng.below(4));
    auto conv = std::make_shared<nn::Conv2d<double>>(in.c, out_c, kernel, stride, true);
    conv->init(rng);
    fill_random(conv->bias(), rng);
    s->ins.emplace_back(in);
    fill_random(s->ins[0], rng);
    s->params = conv->params();
    s->forward = [conv](LayerState& st) { conv->forward(st.ins[0], st.out); };
    s->backward = [conv](LayerState& st) { conv->backward(st.ins[0], st.out, true); };
    s->keep = conv;
    return layer_case(s, rng);
  };
}

template <typename Layer>
CaseFactory elementwise_case(double lo, double hi) {
  return [lo, hi](Rng& rng) {
    auto s = std::make_shared<LayerState>();
    auto layer = std::make_shared<Layer>();
    s->ins.emplace_back(random_shape(rng));
    fill_random(s->ins[0], rng, lo, hi);
    s->forward = [layer](LayerState& st) { layer->forward(st.ins[0], st.out); };
    s->backward = [layer](LayerState& st) { layer->backward(st.ins[0], st.out); };
    s->keep = layer;
    return layer_case(s, rng);
  };
}

CaseFactory batchnorm_case(bool training) {
  return [training](Rng& rng) {
    auto s = std::make_shared<LayerState>();
    Shape in = random_shape(rng);
    if (in.n * in.h * in.w < 2) in.h = 2;
    auto bn = std::make_shared<nn::BatchNorm<double>>(in.c);
    fill_random(bn->gamma(), rng, 0.5, 1.5);
    fill_random(bn->beta(), rng);
    fill_random(bn->running_mean(), rng);
    fill_random(bn->running_var(), rng, 0.5, 2.0);
    bn->set_training(training);
    s->ins.emplace_back(in);
    fill_random(s->ins[0], rng, -2.0, 2.0);
    s->params = bn->params();
    s->forward = [bn](LayerState& st) { bn->forward(st.ins[0], st.out); };
    s->backward = [bn](LayerState& st) { bn->backward(st.ins[0], st.out); };
    s->keep = bn;
    return layer_case(s, rng);
  };
}

Case maxpool_case(Rng& rng) {
  auto s = std::make_shared<LayerState>();
  auto pool = std::make_shared<nn::MaxPool2<double>>();
  Shape in = random_shape(rng);
  in.h = std::max(in.h, 2);
  in.w = std::max(in.w, 2);
  s->ins.emplace_back(in);
  // Distinct values keep the argmax stable under the finite-difference step.
  auto& t = s->ins[0];
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * 0.01;
  for (std::size_t i = t.size(); i > 1; --i) std::swap(t[i - 1], t[rng.below(i)]);
  s->forward = [pool](LayerState& st) { pool->forward(st.ins[0], st.out); };
  s->backward = [pool](LayerState& st) { pool->backward(st.ins[0], st.out); };
  s->keep = pool;
  return layer_case(s, rng);
}

Case concat_case(Rng& rng) {
  auto s = std::make_shared<LayerState>();
  auto cat = std::make_shared<nn::ConcatChannels<double>>();
  const Shape a = random_shape(rng);
  const int parts = 2 + static_cast<int>(rng.below(2));
  for (int p = 0; p < parts; ++p) {
    Shape sp = a;
    sp.c = 1 + static_cast<int>(rng.below(4));
    s->ins.emplace_back(sp);
    fill_random(s->ins.back(), rng);
  }
  s->forward = [cat](LayerState& st) {
    std::vector<const Tensor*> in;
    for (auto& t : st.ins) in.push_back(&t);
    cat->forward(in, st.out);
  };
  s->backward = [cat](LayerState& st) {
    std::vector<Tensor*> in;
    for (auto& t : st.ins) in.push_back(&t);
    cat->backward(in, st.out);
  };
  s->keep = cat;
  return layer_case(s, rng);
}

Case dense_case(Rng& rng) {
  auto s = std::make_shared<LayerState>();
  const Shape in = random_shape(rng);
  auto dense = std::make_shared<nn::Dense<double>>(in.h * in.w * in.c, 1 + static_cast<int>(rng.below(5)));
  dense->init(rng);
  fill_random(dense->bias(), rng);
  s->ins.emplace_back(in);
  fill_random(s->ins[0], rng);
  s->params = dense->params();
  s->forward = [dense](LayerState& st) { dense->forward(st.ins[0], st.out); };
  s->backward = [dense](LayerState& st) { dense->backward(st.ins[0], st.out); };
  s->keep = dense;
  return layer_case(s, rng);
}

Case softmax_ce_case(Rng& rng) {
  const int classes = 2 + static_cast<int>(rng.below(3));
  const std::size_t rows = 1 + rng.below(8);
  Case c;
  c.inputs.resize(rows * classes);
  for (auto& v : c.inputs) v = rng.uniform(-3.0, 3.0);
  auto one_hot = std::make_shared<std::vector<double>>(rows * classes, 0.0);
  auto weight = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    (*one_hot)[r * classes + rng.below(static_cast<std::uint64_t>(classes))] = 1.0;
    (*weight)[r] = rng.uniform(0.1, 1.0);
  }
  c.f = [classes, rows, one_hot, weight](std::span<const double> x, std::span<double> grad) {
    std::vector<double> loss(rows);
    std::vector<std::uint8_t> mask(rows, 1);
    nn::softmax_cross_entropy<double>(x, *one_hot, mask, classes, loss);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) total += (*weight)[r] * loss[r];
    if (!grad.empty()) {
      std::fill(grad.begin(), grad.end(), 0.0);
      nn::softmax_cross_entropy_backward<double>(x, *one_hot, *weight, classes, grad);
    }
    return total;
  };
  return c;
}

Case smooth_l1_case(Rng& rng) {
  Case c;
  c.inputs.resize(1 + rng.below(16));
  for (auto& v : c.inputs) {
    do {
      v = rng.uniform(-3.0, 3.0);
    } while (std::abs(std::abs(v) - 1.0) < 1e-3);  // stay off the kink
  }
  c.f = [](std::span<const double> x, std::span<double> grad) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      total += nn::smooth_l1(x[i]);
      if (!grad.empty()) grad[i] = nn::smooth_l1_grad(x[i]);
    }
    return total;
  };
  return c;
}

Box random_gt(Rng& rng, int image) {
  const double w = rng.uniform(3.0, image * 0.8), h = rng.uniform(3.0, image * 0.8);
  const double x = rng.uniform(0.0, image - w), y = rng.uniform(0.0, image - h);
  return {x, y, x + w, y + h};
}

ShaftPose random_pose(Rng& rng, const PoseRanges& r) {
  ShaftPose p;
  for (std::size_t d = 0; d < kPoseDims; ++d) p[d] = rng.uniform(r.dims[d].min, r.dims[d].max);
  return p;
}

ImageTargets random_targets(Rng& rng, const AnchorSet& anchors, bool with_pose) {
  const PoseRanges ranges;
  std::vector<Box> gts;
  std::vector<ShaftPose> poses;
  const int count = 1 + static_cast<int>(rng.below(2));
  for (int g = 0; g < count; ++g) {
    gts.push_back(random_gt(rng, anchors.image_size));
    poses.push_back(random_pose(rng, ranges));
  }
  std::optional<std::vector<ShaftPose>> p;
  if (with_pose) p = poses;
  return build_targets(anchors, match_anchors(anchors.boxes, gts), gts, p, ranges);
}

// Composite loss with the head maps as variables.
Case detection_loss_case(Rng& rng) {
  ModelConfig mc;
  mc.backbone.input_size = 16;
  mc.backbone.levels = {4, 2};
  const auto anchors = std::make_shared<AnchorSet>(build_anchors(mc));
  const int batch = 1 + static_cast<int>(rng.below(2));
  auto maps = std::make_shared<std::vector<Tensor>>();
  const int na = mc.anchors.per_location();
  for (const auto& l : anchors->levels) {
    maps->emplace_back(Shape{batch, l.size, l.size, kNumClasses * na});
    maps->emplace_back(Shape{batch, l.size, l.size, kBoxDims * na});
    maps->emplace_back(Shape{batch, l.size, l.size, static_cast<int>(kPoseDims) * na});
  }
  auto targets = std::make_shared<std::vector<ImageTargets>>();
  for (int b = 0; b < batch; ++b) targets->push_back(random_targets(rng, *anchors, b == 0 || rng.bernoulli(0.5)));
  Case c;
  for (auto& m : *maps) {
    fill_random(m, rng, -2.0, 2.0);
    c.inputs.insert(c.inputs.end(), m.values().begin(), m.values().end());
  }
  c.f = [anchors, maps, targets](std::span<const double> x, std::span<double> grad) {
    std::size_t off = 0;
    HeadMaps<double> hm;
    for (std::size_t k = 0; k < maps->size(); ++k) {
      auto& m = (*maps)[k];
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.values().begin());
      off += m.size();
      m.zero_grad();
      (k % 3 == 0 ? hm.cls : k % 3 == 1 ? hm.box : hm.pose).push_back(&m);
    }
    const auto loss = total_loss<double>(*anchors, hm, *targets, LossConfig{}, !grad.empty());
    if (!grad.empty()) {
      off = 0;
      for (auto& m : *maps) {
        std::copy(m.grads().begin(), m.grads().end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
        off += m.size();
      }
    }
    return loss.total;
  };
  return c;
}

// Full model plus loss on a one-image batch, parameters as variables.
CaseFactory end_to_end_case(Variant variant) {
  return [variant](Rng& rng) {
    ModelConfig mc;
    mc.variant = variant;
    mc.backbone.input_size = 16;
    mc.backbone.levels = {4, 2};
    mc.backbone.channels = 4;
    mc.backbone.stem_channels = 3;
    mc.pose_hidden = 4;
    auto model = std::make_shared<DetectorModel<double>>(mc, rng.next_u64());
    auto image = std::make_shared<Tensor>(Shape{1, 16, 16, 3});
    fill_random(*image, rng, -2.0, 2.0);
    auto targets = std::make_shared<std::vector<ImageTargets>>();
    targets->push_back(random_targets(rng, model->anchors(), true));

    Case c;
    auto params = model->parameters();
    for (auto& p : params) {
      // Non-zero biases keep every path active.
      if (p.name.find("bias") != std::string::npos || p.name.find("beta") != std::string::npos) {
        fill_random(*p.tensor, rng, -0.1, 0.1);
      }
      c.inputs.insert(c.inputs.end(), p.tensor->values().begin(), p.tensor->values().end());
    }
    c.f = [model, image, targets](std::span<const double> x, std::span<double> grad) {
      auto ps = model->parameters();
      std::size_t off = 0;
      for (auto& p : ps) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(off), p.tensor->size(), p.tensor->values().begin());
        off += p.tensor->size();
      }
      model->set_training(true);
      model->forward(*image);
      model->zero_grad();
      auto maps = head_maps(*model);
      const auto loss = total_loss<double>(model->anchors(), maps, *targets, LossConfig{}, !grad.empty());
      if (!grad.empty()) {
        model->backward();
        off = 0;
        for (auto& p : ps) {
          std::copy(p.tensor->grads().begin(), p.tensor->grads().end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
          off += p.tensor->size();
        }
      }
      return loss.total;
    };
    // Every parameter of each tensor would be slow; check a seeded sample plus all pose weights.
    std::size_t off = 0;
    for (auto& p : params) {
      const bool all = is_pose_parameter(p.name) || p.tensor->size() <= 8;
      for (std::size_t i = 0; i < p.tensor->size(); ++i) {
        if (all || rng.bernoulli(0.25)) c.indices.push_back(off + i);
      }
      off += p.tensor->size();
    }
    return c;
  };
}

std::vector<OpSpec> registry() {
  return {
      {"conv3x3_s1", kOpTolerance, 0, conv_case(3, 1)},
      {"conv3x3_s2", kOpTolerance, 0, conv_case(3, 2)},
      {"conv1x1_s1", kOpTolerance, 0, conv_case(1, 1)},
      {"conv1x1_s2", kOpTolerance, 0, conv_case(1, 2)},
      {"relu", kOpTolerance, 0, elementwise_case<nn::Relu<double>>(-1.0, 1.0)},
      {"tanh", kOpTolerance, 0, elementwise_case<nn::Tanh<double>>(-2.0, 2.0)},
      {"batchnorm_train", kOpTolerance, 0, batchnorm_case(true)},
      {"batchnorm_eval", kOpTolerance, 0, batchnorm_case(false)},
      {"maxpool2", kOpTolerance, 0, maxpool_case},
      {"concat", kOpTolerance, 0, concat_case},
      {"dense", kOpTolerance, 0, dense_case},
      {"softmax_cross_entropy", kOpTolerance, 0, softmax_ce_case},
      {"smooth_l1", kOpTolerance, 0, smooth_l1_case},
      {"detection_loss", kOpTolerance, 0, detection_loss_case},
      {"end_to_end_variant_c", kEndToEndTolerance, 2, end_to_end_case(Variant::kC)},
      {"end_to_end_variant_d", kEndToEndTolerance, 2, end_to_end_case(Variant::kD)},
  };
}

}  // namespace

std::vector<std::string> grad_check_ops() {
  std::vector<std::string> names;
  for (const auto& op : registry()) names.push_back(op.name);
  return names;
}

bool GradCheckReport::passed() const {
  for (const auto& e : entries) {
    if (!e.passed()) return false;
  }
  return !entries.empty();
}

std::string GradCheckReport::text() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %6s %14s %10s  %s\n", "op", "trials", "max_rel_error", "tolerance", "result");
  out += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%-24s %6d %14.3e %10.0e  %s\n", e.op.c_str(), e.trials, e.max_rel_error,
                  e.tolerance, e.passed() ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

GradCheckReport run_grad_checks(const GradCheckOptions& options) {
  require(options.trials >= 1, "grad-check: trials must be at least 1");
  const auto ops = registry();
  if (!options.inject_fault.empty()) {
    bool known = false;
    for (const auto& op : ops) known = known || op.name == options.inject_fault;
    if (!known) fail(ErrorCode::kInvalidArgument, "grad-check: unknown op '" + options.inject_fault + "'");
  }
  GradCheckReport report;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const auto& op = ops[k];
    GradCheckEntry entry{op.name, op.trials > 0 ? op.trials : options.trials, 0.0, op.tolerance};
    for (int t = 0; t < entry.trials; ++t) {
      Rng rng(mix_seed(options.seed, k, static_cast<std::uint64_t>(t)));
      Case c = op.make(rng);
      nn::Computation f = c.f;
      if (op.name == options.inject_fault) {
        f = [inner = c.f](std::span<const double> x, std::span<double> grad) {
          const double v = inner(x, grad);
          for (auto& g : grad) g *= 1.1;
          return v;
        };
      }
      const auto r = nn::grad_check(f, c.inputs, 1e-5, c.indices);
      entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace shaftpose
