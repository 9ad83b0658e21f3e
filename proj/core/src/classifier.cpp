#include "ota/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "container.hpp"
#include "ota/error.hpp"
#include "ota/numerics.hpp"
#include "ota/rng.hpp"

namespace ota {

void ArchitectureSpec::validate() const {
  if (p == 0) throw ConfigError("architecture: p must be positive");
  if (classes.empty()) throw ConfigError("architecture: empty class list");
  std::set<ModulationType> seen(classes.begin(), classes.end());
  if (seen.size() != classes.size()) throw ConfigError("architecture: duplicate class in list");
  for (const auto& c : conv)
    if (c.filters == 0 || c.width == 0 || c.width % 2 == 0)
      throw ConfigError("architecture: conv layers need filters > 0 and an odd width");
  for (auto d : dense)
    if (d == 0) throw ConfigError("architecture: dense width must be positive");
}

LabelVector LabelVector::one_hot(std::size_t index, std::size_t classes) {
  if (index >= classes) throw ConfigError("label index " + std::to_string(index) + " >= C=" + std::to_string(classes));
  return {index, classes};
}

LabelVector LabelVector::from_vector(std::span<const double> y) {
  std::size_t ones = 0, at = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      ++ones;
      at = i;
    } else if (y[i] != 0.0) {
      throw ConfigError("label vector entries must be 0 or 1");
    }
  }
  if (ones != 1) throw ConfigError("label vector must contain exactly one 1");
  return {at, y.size()};
}

RVec LabelVector::dense() const {
  RVec y(size_, 0.0);
  y[index_] = 1.0;
  return y;
}

ClassifierModel::ClassifierModel(ArchitectureSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t off = 0;
  std::size_t ch = 2;
  const std::size_t len = spec_.p;
  for (const auto& c : spec_.conv) {
    Layer l;
    l.conv = true;
    l.in_ch = ch;
    l.out_ch = c.filters;
    l.width = c.width;
    l.length = len;
    l.in = ch * len;
    l.out = c.filters * len;
    l.w_off = off;
    off += l.out_ch * l.in_ch * l.width;
    l.b_off = off;
    off += l.out_ch;
    layers_.push_back(l);
    ch = c.filters;
  }
  std::size_t in = ch * len;
  auto add_dense = [&](std::size_t out, bool relu) {
    Layer l;
    l.relu = relu;
    l.in = in;
    l.out = out;
    l.w_off = off;
    off += in * out;
    l.b_off = off;
    off += out;
    layers_.push_back(l);
    in = out;
  };
  for (auto d : spec_.dense) add_dense(d, true);
  add_dense(spec_.num_classes(), false);

  params_.assign(off, 0.0);
  Rng rng(spec_.seed, Stream::Init);
  for (const auto& l : layers_) {
    const std::size_t fan_in = l.conv ? l.in_ch * l.width : l.in;
    const double bound = std::sqrt((l.relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    for (std::size_t i = l.w_off; i < l.b_off; ++i) params_[i] = rng.uniform(-bound, bound);
  }
  round_to_f32();
}

ClassifierModel::LayerView ClassifierModel::layer(std::size_t i) {
  const Layer& l = layers_.at(i);
  return {std::span<double>(params_).subspan(l.w_off, l.b_off - l.w_off),
          std::span<double>(params_).subspan(l.b_off, l.conv ? l.out_ch : l.out)};
}

std::optional<std::size_t> ClassifierModel::class_index(ModulationType m) const {
  const auto it = std::find(spec_.classes.begin(), spec_.classes.end(), m);
  if (it == spec_.classes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - spec_.classes.begin());
}

void ClassifierModel::round_to_f32() {
  for (auto& w : params_) w = static_cast<double>(static_cast<float>(w));
}

void ClassifierModel::check_input(std::span<const double> x) const {
  if (x.size() != spec_.input_size())
    throw ShapeError("classifier input has " + std::to_string(x.size()) + " reals, expected " +
                     std::to_string(spec_.input_size()));
}

void ClassifierModel::run_forward(std::span<const double> x, Trace& t) const {
  t.act.resize(layers_.size() + 1);
  t.act[0].assign(x.begin(), x.end());
  const double* P = params_.data();
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const RVec& in = t.act[li];
    RVec& out = t.act[li + 1];
    out.assign(l.out, 0.0);
    if (l.conv) {
      const std::size_t L = l.length, W = l.width, pad = (W - 1) / 2;
      for (std::size_t f = 0; f < l.out_ch; ++f) {
        double* o = out.data() + f * L;
        const double b = P[l.b_off + f];
        for (std::size_t t2 = 0; t2 < L; ++t2) o[t2] = b;
        for (std::size_t c = 0; c < l.in_ch; ++c) {
          const double* src = in.data() + c * L;
          const double* w = P + l.w_off + (f * l.in_ch + c) * W;
          for (std::size_t k = 0; k < W; ++k) {
            const double wk = w[k];
            // o[t] += wk * src[t + k - pad] for in-range indices
            const std::size_t t0 = k < pad ? pad - k : 0;
            const std::size_t t1 = k > pad ? L - (k - pad) : L;
            const double* s = src + k - pad;
            for (std::size_t tt = t0; tt < t1; ++tt) o[tt] += wk * s[tt];
          }
        }
      }
    } else {
      const double* Wm = P + l.w_off;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = Wm + o * l.in;
        double acc = 0.0;
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * in[i];
        out[o] = acc + P[l.b_off + o];
      }
    }
    if (l.relu)
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
  }
}

RVec ClassifierModel::run_backward(const Trace& t, RVec delta, std::span<double> grad, bool want_input) const {
  const double* P = params_.data();
  const bool want_params = !grad.empty();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const RVec& in = t.act[li];
    if (l.relu) {
      const RVec& out = t.act[li + 1];
      for (std::size_t i = 0; i < l.out; ++i)
        if (!(out[i] > 0.0)) delta[i] = 0.0;
    }
    const bool need_in = li > 0 || want_input;
    RVec din(need_in ? l.in : 0, 0.0);
    if (l.conv) {
      const std::size_t L = l.length, W = l.width, pad = (W - 1) / 2;
      for (std::size_t f = 0; f < l.out_ch; ++f) {
        const double* d = delta.data() + f * L;
        if (want_params) {
          double sb = 0.0;
          for (std::size_t tt = 0; tt < L; ++tt) sb += d[tt];
          grad[l.b_off + f] += sb;
        }
        for (std::size_t c = 0; c < l.in_ch; ++c) {
          const double* src = in.data() + c * L;
          const double* w = P + l.w_off + (f * l.in_ch + c) * W;
          double* gw = want_params ? grad.data() + l.w_off + (f * l.in_ch + c) * W : nullptr;
          double* di = need_in ? din.data() + c * L : nullptr;
          for (std::size_t k = 0; k < W; ++k) {
            const std::size_t t0 = k < pad ? pad - k : 0;
            const std::size_t t1 = k > pad ? L - (k - pad) : L;
            const double* s = src + k - pad;
            if (gw) {
              double acc = 0.0;
              for (std::size_t tt = t0; tt < t1; ++tt) acc += d[tt] * s[tt];
              gw[k] += acc;
            }
            if (di) {
              double* dd = di + k - pad;
              const double wk = w[k];
              for (std::size_t tt = t0; tt < t1; ++tt) dd[tt] += wk * d[tt];
            }
          }
        }
      }
    } else {
      const double* Wm = P + l.w_off;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = Wm + o * l.in;
        if (want_params) {
          double* g = grad.data() + l.w_off + o * l.in;
          for (std::size_t i = 0; i < l.in; ++i) g[i] += d * in[i];
          grad[l.b_off + o] += d;
        }
        if (need_in)
          for (std::size_t i = 0; i < l.in; ++i) din[i] += d * row[i];
      }
    }
    delta = std::move(din);
  }
  return delta;
}

namespace {

RVec softmax(const RVec& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  RVec p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

// log(sum_j exp(z_j - z_label)); the log1p form keeps full relative precision
// when the label dominates and the loss is tiny.
double cross_entropy(const RVec& z, std::size_t label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  if (z[label] == zmax) {
    double rest = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j)
      if (j != label) rest += std::exp(z[j] - zmax);
    return std::log1p(rest);
  }
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return zmax + std::log(s) - z[label];
}

// dL/dz = softmax(z) - onehot(label), with the label entry formed as minus the
// other probabilities rather than p_label - 1.
RVec logit_delta(const RVec& z, std::size_t label) {
  RVec d = softmax(z);
  double rest = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (j != label) rest += d[j];
  d[label] = -rest;
  return d;
}

}  // namespace

RVec ClassifierModel::logits(std::span<const double> x) const {
  check_input(x);
  Trace t;
  run_forward(x, t);
  return t.act.back();
}

RVec ClassifierModel::probabilities(std::span<const double> x) const { return softmax(logits(x)); }

double ClassifierModel::loss(std::span<const double> x, std::size_t label) const {
  if (label >= num_classes()) throw ShapeError("label index out of range");
  return cross_entropy(logits(x), label);
}

RVec ClassifierModel::input_gradient(std::span<const double> x, std::size_t label, double* loss_out) const {
  check_input(x);
  if (label >= num_classes()) throw ShapeError("label index out of range");
  Trace t;
  run_forward(x, t);
  const RVec& z = t.act.back();
  if (loss_out) *loss_out = cross_entropy(z, label);
  RVec delta = logit_delta(z, label);
  return run_backward(t, std::move(delta), {}, true);
}

double ClassifierModel::accumulate_parameter_gradient(std::span<const double> x, std::size_t label,
                                                      std::span<double> grad, bool* correct) const {
  check_input(x);
  Trace t;
  run_forward(x, t);
  const RVec& z = t.act.back();
  const double l = cross_entropy(z, label);
  if (correct) *correct = argmax(z) == label;
  RVec delta = logit_delta(z, label);
  run_backward(t, std::move(delta), grad, false);
  return l;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

RVec forward(const ClassifierModel& model, std::span<const cdouble> x) { return model.probabilities(to_real(x)); }

std::size_t predict_index(const ClassifierModel& model, std::span<const cdouble> x) {
  // Softmax is monotone, so the argmax of the logits is the argmax of f.
  return argmax(model.logits(to_real(x)));
}

ModulationType predict(const ClassifierModel& model, std::span<const cdouble> x) {
  return model.spec().classes[predict_index(model, x)];
}

double loss(const ClassifierModel& model, std::span<const cdouble> x, const LabelVector& y) {
  if (y.size() != model.num_classes()) throw ShapeError("label vector size differs from C");
  return model.loss(to_real(x), y.index());
}

RVec input_gradient(const ClassifierModel& model, std::span<const cdouble> x, const LabelVector& y) {
  if (y.size() != model.num_classes()) throw ShapeError("label vector size differs from C");
  return model.input_gradient(to_real(x), y.index());
}

namespace {

std::vector<std::size_t> label_indices(const ClassifierModel& model, const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto& s = ds.samples[j];
    if (s.iq.size() != model.spec().p)
      throw ShapeError("sample length " + std::to_string(s.iq.size()) + " != model p " + std::to_string(model.spec().p));
    const auto c = model.class_index(s.label);
    if (!c)
      throw ShapeError("dataset label " + std::string(to_string(s.label)) + " is not one of the model's " +
                       std::to_string(model.num_classes()) + " classes");
    idx[j] = *c;
  }
  return idx;
}

}  // namespace

double evaluate(const ClassifierModel& model, const Dataset& ds, std::optional<Split> split) {
  const auto labels = label_indices(model, ds);
  std::vector<char> hit(ds.size(), 0), used(ds.size(), 0);
  parallel_for(ds.size(), [&](std::size_t j) {
    if (split && (j >= ds.split.size() || ds.split[j] != *split)) return;
    used[j] = 1;
    hit[j] = predict_index(model, ds.samples[j].iq) == labels[j];
  });
  const auto n = std::count(used.begin(), used.end(), 1);
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(n);
}

TrainingReport train(ClassifierModel& model, const Dataset& ds, const TrainConfig& cfg) {
  {
    std::set<ModulationType> a(ds.spec.classes.begin(), ds.spec.classes.end());
    std::set<ModulationType> b(model.spec().classes.begin(), model.spec().classes.end());
    if (a != b)
      throw ShapeError("dataset has " + std::to_string(a.size()) + " classes, model expects " +
                       std::to_string(b.size()) + " (class lists must match)");
  }
  if (cfg.batch == 0 || cfg.epochs == 0) throw ConfigError("train: epochs and batch must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  const auto labels = label_indices(model, ds);

  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < ds.size(); ++j)
    if (j >= ds.split.size() || ds.split[j] == Split::Train) order.push_back(j);
  if (order.empty()) throw ConfigError("train: no training samples");

  std::vector<RVec> inputs(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) inputs[j] = to_real(ds.samples[j].iq);

  const std::size_t n = model.parameter_count();
  auto params = model.parameters();
  RVec grad(n), m1(n, 0.0), m2(n, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step = 0;

  TrainingReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(cfg.seed, Stream::Shuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t j = order[b];
        bool ok = false;
        batch_loss += model.accumulate_parameter_gradient(inputs[j], labels[j], grad, &ok);
        correct += ok;
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << start / cfg.batch
            << ": loss=" << batch_loss << " (learning rate " << cfg.learning_rate << ")";
        throw TrainingError(msg.str());
      }
      loss_sum += batch_loss;
      const double scale = 1.0 / static_cast<double>(end - start);
      ++step;
      if (cfg.optimizer == Optimizer::Adam) {
        const double c1 = 1.0 - std::pow(beta1, double(step));
        const double c2 = 1.0 - std::pow(beta2, double(step));
        for (std::size_t k = 0; k < n; ++k) {
          const double g = grad[k] * scale;
          m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
          m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
          params[k] -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + adam_eps);
        }
      } else {
        for (std::size_t k = 0; k < n; ++k) {
          const double g = grad[k] * scale;
          m1[k] = cfg.momentum * m1[k] + g;
          params[k] -= cfg.learning_rate * m1[k];
        }
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    report.epoch_loss.push_back(mean_loss);
    if (cfg.on_epoch) cfg.on_epoch(epoch, mean_loss, double(correct) / double(order.size()));
  }

  model.round_to_f32();
  report.train_accuracy = evaluate(model, ds, Split::Train);
  report.test_accuracy = ds.count(Split::Test) > 0 ? evaluate(model, ds, Split::Test) : report.train_accuracy;
  model.meta.epochs = cfg.epochs;
  model.meta.seed = cfg.seed;
  model.meta.optimizer = cfg.optimizer == Optimizer::Adam ? "adam" : "sgd";
  model.meta.learning_rate = cfg.learning_rate;
  model.meta.final_loss = report.epoch_loss.back();
  model.meta.train_accuracy = report.train_accuracy;
  model.meta.test_accuracy = report.test_accuracy;
  return report;
}

namespace {

nlohmann::json num_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double num_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  const auto& s = model.spec();
  nlohmann::json arch;
  arch["p"] = s.p;
  arch["classes"] = nlohmann::json::array();
  for (auto c : s.classes) arch["classes"].push_back(std::string(to_string(c)));
  arch["conv"] = nlohmann::json::array();
  for (const auto& c : s.conv) arch["conv"].push_back({{"filters", c.filters}, {"width", c.width}});
  arch["dense"] = s.dense;
  arch["activation"] = "relu";
  arch["seed"] = s.seed;

  nlohmann::json h;
  h["format"] = "ota-model";
  h["version"] = 1;
  h["arch"] = arch;
  h["meta"] = {{"epochs", model.meta.epochs},
               {"seed", model.meta.seed},
               {"optimizer", model.meta.optimizer},
               {"learning_rate", model.meta.learning_rate},
               {"final_loss", num_or_null(model.meta.final_loss)},
               {"train_accuracy", num_or_null(model.meta.train_accuracy)},
               {"test_accuracy", num_or_null(model.meta.test_accuracy)}};
  h["parameter_count"] = model.parameter_count();

  std::vector<unsigned char> payload;
  payload.reserve(model.parameter_count() * 4);
  for (double w : model.parameters()) detail::append_f32(payload, w);
  detail::write_container(path, h, payload);
}

ClassifierModel load_model(const std::filesystem::path& path) {
  auto c = detail::read_container(path, "ota-model", 1);
  ArchitectureSpec s;
  std::size_t declared = 0;
  TrainingMetadata meta;
  try {
    const auto& a = c.header.at("arch");
    if (a.value("activation", "relu") != "relu") throw CorruptFileError(path.string() + ": unsupported activation");
    s.p = a.at("p").get<std::size_t>();
    s.classes.clear();
    for (const auto& n : a.at("classes")) s.classes.push_back(parse_modulation(n.get<std::string>()));
    s.conv.clear();
    for (const auto& l : a.at("conv")) s.conv.push_back({l.at("filters").get<std::size_t>(), l.at("width").get<std::size_t>()});
    s.dense = a.at("dense").get<std::vector<std::size_t>>();
    s.seed = a.at("seed").get<std::uint64_t>();
    declared = c.header.at("parameter_count").get<std::size_t>();
    if (c.header.contains("meta")) {
      const auto& m = c.header["meta"];
      meta.epochs = m.value("epochs", std::size_t{0});
      meta.seed = m.value("seed", std::uint64_t{0});
      meta.optimizer = m.value("optimizer", std::string());
      meta.learning_rate = m.value("learning_rate", 0.0);
      meta.final_loss = num_from(m.value("final_loss", nlohmann::json(nullptr)));
      meta.train_accuracy = num_from(m.value("train_accuracy", nlohmann::json(nullptr)));
      meta.test_accuracy = num_from(m.value("test_accuracy", nlohmann::json(nullptr)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(path.string() + ": malformed model header (" + e.what() + ")");
  }
  ClassifierModel model(s);
  if (declared != model.parameter_count())
    throw ShapeError(path.string() + ": header declares " + std::to_string(declared) +
                     " parameters, architecture has " + std::to_string(model.parameter_count()));
  if (c.payload.size() != declared * 4)
    throw CorruptFileError(path.string() + ": weight payload is " + std::to_string(c.payload.size()) +
                           " bytes, expected " + std::to_string(declared * 4));
  auto params = model.parameters();
  for (std::size_t i = 0; i < declared; ++i) params[i] = detail::read_f32(c.payload, i);
  model.meta = meta;
  return model;
}

}  // namespace ota
