#include "ota/universal.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include <bit>

#include "container.hpp"
#include "ota/error.hpp"
#include "ota/numerics.hpp"

namespace ota {

void CraftingSet::validate() const {
  if (inputs.size() < 2) throw ConfigError("crafting set needs at least 2 entries");
  if (labels.size() != inputs.size() || channels.size() != inputs.size())
    throw ShapeError("crafting set: inputs, labels and channels must have the same count");
  const std::size_t p = inputs.front().size();
  for (std::size_t n = 0; n < inputs.size(); ++n)
    if (inputs[n].size() != p || channels[n].size() != p) throw ShapeError("crafting set: vector lengths differ");
}

CVec principal_direction(const RealMatrix& stack, bool centered, double* sigma1) {
  RealMatrix m = stack;
  if (centered && m.rows() > 0) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
      mean /= static_cast<double>(m.rows());
      for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) -= mean;
    }
  }
  const SingularPair sp = first_right_singular(m);
  if (sigma1) *sigma1 = sp.sigma1;
  return to_complex(sp.v1);
}

int choose_sign(std::span<const cdouble> v1, const CraftingSet& set, const ClassifierModel& model,
                const PowerBudget& budget) {
  const double amp = budget.amplitude();
  double plus = 0.0, minus = 0.0;
  for (std::size_t n = 0; n < set.size(); ++n) {
    const CVec rx = apply_channel(set.channels[n], v1);
    CVec a = set.inputs[n], b = set.inputs[n];
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] += amp * rx[i];
      b[i] -= amp * rx[i];
    }
    plus += model.loss(to_real(a), set.labels[n]);
    minus += model.loss(to_real(b), set.labels[n]);
  }
  return minus > plus ? -1 : 1;
}

UapPerturbation craft_from_set(const ClassifierModel& model, const CraftingSet& set, const PowerBudget& budget,
                               const UapSettings& settings, AttackKind mode) {
  budget.validate();
  set.validate();
  if (is_universal(settings.inner) || settings.inner == AttackKind::LimitedChannel || settings.inner == AttackKind::None)
    throw ConfigError("inner attack must be an input-specific white-box kind, got '" +
                      std::string(to_string(settings.inner)) + "'");
  const std::size_t n = set.size();
  std::vector<std::optional<RVec>> rows(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      const AttackOutcome o = craft_white_box(settings.inner, model, set.inputs[i], set.labels[i], set.channels[i],
                                              budget, settings.white_box);
      rows[i] = to_real(o.delta);
    } catch (const Error&) {
      rows[i].reset();
    }
  });
  RealMatrix stack;
  UapPerturbation u;
  for (auto& r : rows) {
    if (r)
      stack.append_row(*r);
    else
      ++u.excluded;
  }
  if (stack.rows() < 2)
    throw NumericError("only " + std::to_string(stack.rows()) + " usable perturbation rows; need at least 2");

  CVec v1 = principal_direction(stack, settings.centered, &u.sigma1);
  u.sign = choose_sign(v1, set, model, budget);
  const double scale = budget.amplitude() * u.sign / norm2(v1);
  u.delta.resize(v1.size());
  for (std::size_t i = 0; i < v1.size(); ++i) u.delta[i] = scale * v1[i];
  u.mode = mode;
  u.inner = settings.inner;
  u.rows = stack.rows();
  u.centered = settings.centered;
  u.p_max = budget.p_max;
  u.source = model_fingerprint(model);
  return u;
}

UapPerturbation craft_limited_channel(const ClassifierModel& model, std::span<const cdouble> r_t,
                                      std::size_t true_label, const ChannelModelParams& channel, std::size_t n,
                                      const PowerBudget& budget, Rng& rng, const UapSettings& settings) {
  if (n < 2) throw ConfigError("limited-channel attack needs N >= 2 channel draws");
  CraftingSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.inputs.emplace_back(r_t.begin(), r_t.end());
    set.labels.push_back(true_label);
    set.channels.push_back(sample_channel(channel, r_t.size(), rng).h);
  }
  return craft_from_set(model, set, budget, settings, AttackKind::LimitedChannel);
}

UapPerturbation craft_uap_inputs(const ClassifierModel& model, const std::vector<CVec>& inputs,
                                 const std::vector<std::size_t>& labels, std::span<const cdouble> h,
                                 const PowerBudget& budget, const UapSettings& settings) {
  CraftingSet set;
  set.inputs = inputs;
  set.labels = labels;
  set.channels.assign(inputs.size(), CVec(h.begin(), h.end()));
  return craft_from_set(model, set, budget, settings, AttackKind::UapInputs);
}

UapPerturbation craft_uap_limited(const ClassifierModel& model, const std::vector<CVec>& inputs,
                                  const std::vector<std::size_t>& labels, const ChannelModelParams& channel,
                                  const PowerBudget& budget, Rng& rng, const UapSettings& settings) {
  if (inputs.size() < 2) throw ConfigError("UAP needs at least 2 crafting inputs");
  if (labels.size() != inputs.size()) throw ShapeError("UAP: inputs and labels differ in count");
  const std::size_t p = inputs.front().size();
  CraftingSet set;
  if (settings.pairing == Pairing::Paired) {
    set.inputs = inputs;
    set.labels = labels;
    for (std::size_t i = 0; i < inputs.size(); ++i) set.channels.push_back(sample_channel(channel, p, rng).h);
  } else {
    const std::size_t m = settings.crossed_channels == 0 ? inputs.size() : settings.crossed_channels;
    std::vector<CVec> hs;
    for (std::size_t j = 0; j < m; ++j) hs.push_back(sample_channel(channel, p, rng).h);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      for (const auto& h : hs) {
        set.inputs.push_back(inputs[i]);
        set.labels.push_back(labels[i]);
        set.channels.push_back(h);
      }
  }
  return craft_from_set(model, set, budget, settings, AttackKind::UapLimited);
}

UapPerturbation blackbox_uap(const ClassifierModel& substitute, const std::vector<CVec>& inputs,
                             const std::vector<std::size_t>& labels, const ChannelModelParams& channel,
                             const PowerBudget& budget, Rng& rng, const UapSettings& settings) {
  UapPerturbation u = craft_uap_limited(substitute, inputs, labels, channel, budget, rng, settings);
  u.mode = AttackKind::UapBlackbox;
  return u;
}

std::string model_fingerprint(const ClassifierModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (double w : model.parameters()) mix(std::bit_cast<std::uint32_t>(static_cast<float>(w)));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

nlohmann::json uap_json(const UapPerturbation& u) {
  return {{"mode", std::string(to_string(u.mode))},
          {"inner", std::string(to_string(u.inner))},
          {"rows", u.rows},
          {"excluded", u.excluded},
          {"sign", u.sign},
          {"centered", u.centered},
          {"p_max", u.p_max},
          {"energy", energy(u.delta)},
          {"sigma1", u.sigma1},
          {"source", u.source},
          {"p", u.delta.size()}};
}

}  // namespace

std::string uap_to_json(const UapPerturbation& u) { return uap_json(u).dump(2); }

void save_uap(const UapPerturbation& u, const std::filesystem::path& path) {
  nlohmann::json h;
  h["format"] = "ota-uap";
  h["version"] = 1;
  h["uap"] = uap_json(u);
  std::vector<unsigned char> payload;
  for (const auto& z : u.delta) {
    detail::append_f64(payload, z.real());
    detail::append_f64(payload, z.imag());
  }
  detail::write_container(path, h, payload);
}

UapPerturbation load_uap(const std::filesystem::path& path) {
  auto c = detail::read_container(path, "ota-uap", 1);
  UapPerturbation u;
  try {
    const auto& j = c.header.at("uap");
    u.mode = parse_attack_kind(j.at("mode").get<std::string>());
    u.inner = parse_attack_kind(j.at("inner").get<std::string>());
    u.rows = j.at("rows").get<std::size_t>();
    u.excluded = j.at("excluded").get<std::size_t>();
    u.sign = j.at("sign").get<int>();
    u.centered = j.at("centered").get<bool>();
    u.p_max = j.at("p_max").get<double>();
    u.sigma1 = j.at("sigma1").get<double>();
    u.source = j.at("source").get<std::string>();
    const auto p = j.at("p").get<std::size_t>();
    if (c.payload.size() != p * 16)
      throw CorruptFileError(path.string() + ": UAP payload length does not match p=" + std::to_string(p));
    u.delta.resize(p);
    for (std::size_t i = 0; i < p; ++i)
      u.delta[i] = {detail::read_f64(c.payload, 2 * i), detail::read_f64(c.payload, 2 * i + 1)};
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(path.string() + ": malformed UAP header (" + e.what() + ")");
  }
  return u;
}

}  // namespace ota
