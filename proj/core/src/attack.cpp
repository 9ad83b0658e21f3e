#include "ota/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "container.hpp"
#include "ota/channel.hpp"
#include "ota/error.hpp"
#include "ota/numerics.hpp"

namespace ota {

namespace {

struct KindName {
  AttackKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 12> kKindNames = {{{AttackKind::None, "none"},
                                                  {AttackKind::NoCh, "noch"},
                                                  {AttackKind::ChannelInversion, "channel-inversion"},
                                                  {AttackKind::MmseTargeted, "mmse-targeted"},
                                                  {AttackKind::MrppTargeted, "mrpp-targeted"},
                                                  {AttackKind::NaiveNontargeted, "naive-nontargeted"},
                                                  {AttackKind::MmseNontargeted, "mmse-nontargeted"},
                                                  {AttackKind::MrppNontargeted, "mrpp-nontargeted"},
                                                  {AttackKind::LimitedChannel, "limited-channel"},
                                                  {AttackKind::UapInputs, "uap-inputs"},
                                                  {AttackKind::UapLimited, "uap-limited"},
                                                  {AttackKind::UapBlackbox, "uap-blackbox"}}};

constexpr double kTapFloor = 1e-12;

CVec fallback_direction(std::size_t p) {
  CVec d(p, 0.0);
  if (p > 0) d[0] = 1.0;
  return d;
}

CVec ones(std::size_t p) { return CVec(p, cdouble(1.0, 0.0)); }

void check_lengths(std::span<const cdouble> r_t, std::span<const cdouble> h) {
  if (h.size() != r_t.size())
    throw ShapeError("channel length " + std::to_string(h.size()) + " != input length " + std::to_string(r_t.size()));
}

// Per-class flip-scale search. With h empty the received direction equals the crafted one (H = I).
AttackOutcome targeted_search(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                              std::span<const cdouble> h, const PowerBudget& budget, const TargetedSearchConfig& cfg,
                              AttackKind kind) {
  budget.validate();
  cfg.validate(budget);
  if (!h.empty()) check_lengths(r_t, h);
  const std::size_t C = model.num_classes();
  if (true_label >= C) throw ShapeError("true label out of range");
  const std::size_t p = r_t.size();
  const double upper = cfg.resolved_upper(budget);
  const double acc = cfg.resolved_eps_acc(budget);
  const Weighting weighting = h.empty() ? Weighting::None : Weighting::ConjChannel;

  AttackOutcome out;
  out.kind = kind;
  out.p_max = budget.p_max;
  out.eps.assign(C, upper);
  std::vector<CVec> dirs(C);
  CVec x_adv(p);
  for (std::size_t c = 0; c < C; ++c) {
    if (c == true_label) continue;
    try {
      dirs[c] = fgm_gradient(model, r_t, c, weighting, h);
    } catch (const DegenerateGradientError&) {
      dirs[c] = fallback_direction(p);
      out.diag.degenerate_gradient = true;
    }
    const CVec u = h.empty() ? dirs[c] : apply_channel(h, dirs[c]);
    auto flips = [&](double eps) {
      for (std::size_t i = 0; i < p; ++i) x_adv[i] = r_t[i] - eps * u[i];
      return predict_index(model, x_adv) != true_label;
    };
    const BisectResult r = bisect(flips, 0.0, upper, acc);
    out.eps[c] = r.hi;
    out.diag.iterations += r.iterations;
  }

  if (C < 2) {
    out.delta.assign(p, 0.0);
    out.reference.assign(p, 0.0);
    out.feasible = false;
    return out;
  }
  std::size_t target = true_label == 0 ? 1 : 0;
  for (std::size_t c = 0; c < C; ++c)
    if (c != true_label && out.eps[c] < out.eps[target]) target = c;
  out.target = target;
  out.feasible = out.eps[target] < upper;

  const double amp = budget.amplitude();
  const double scale = cfg.minimum_power ? std::min(out.eps[target], amp) : amp;
  out.delta.resize(p);
  out.reference.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    out.delta[i] = -scale * dirs[target][i];
    out.reference[i] = amp * dirs[target][i];
  }
  return out;
}

AttackOutcome nontargeted_iterative(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                                    const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h,
                                    Weighting weighting, AttackKind kind) {
  budget.validate();
  if (epochs == 0) throw ConfigError("non-targeted attack needs at least one epoch");
  check_lengths(r_t, h);
  const std::size_t p = r_t.size();
  const double step = std::sqrt(budget.p_max / static_cast<double>(epochs));

  AttackOutcome out;
  out.kind = kind;
  out.p_max = budget.p_max;
  CVec x(r_t.begin(), r_t.end());
  CVec sum(p, 0.0);
  for (std::size_t e = 0; e < epochs; ++e) {
    CVec dir;
    try {
      dir = fgm_gradient(model, x, true_label, weighting, h);
    } catch (const DegenerateGradientError&) {
      if (e > 0) {
        out.diag.early_stop = true;
        break;
      }
      dir = fallback_direction(p);
      out.diag.degenerate_gradient = true;
    }
    for (std::size_t i = 0; i < p; ++i) {
      x[i] += step * h[i] * dir[i];
      sum[i] += step * dir[i];
    }
    ++out.diag.iterations;
  }
  double n = norm2(sum);
  if (!(n > 0.0)) {
    sum = fallback_direction(p);
    n = 1.0;
    out.diag.degenerate_gradient = true;
  }
  const double amp = budget.amplitude();
  out.delta.resize(p);
  for (std::size_t i = 0; i < p; ++i) out.delta[i] = amp * sum[i] / n;
  out.reference = out.delta;
  return out;
}

}  // namespace

std::string_view to_string(AttackKind k) {
  for (const auto& e : kKindNames)
    if (e.kind == k) return e.name;
  return "?";
}

std::string attack_kind_list() {
  std::string s;
  for (auto k : kAttackKinds) {
    if (!s.empty()) s += ", ";
    s += to_string(k);
  }
  return s;
}

AttackKind parse_attack_kind(std::string_view name) {
  for (const auto& e : kKindNames)
    if (e.name == name) return e.kind;
  throw ConfigError("unknown attack kind '" + std::string(name) + "'; valid kinds: none, " + attack_kind_list());
}

bool is_targeted(AttackKind k) {
  return k == AttackKind::NoCh || k == AttackKind::ChannelInversion || k == AttackKind::MmseTargeted ||
         k == AttackKind::MrppTargeted;
}

bool is_universal(AttackKind k) {
  return k == AttackKind::UapInputs || k == AttackKind::UapLimited || k == AttackKind::UapBlackbox;
}

double PowerBudget::amplitude() const { return std::sqrt(p_max); }

void PowerBudget::validate() const {
  if (!(p_max > 0.0) || !std::isfinite(p_max)) throw ConfigError("power budget must be positive and finite");
}

void TargetedSearchConfig::validate(const PowerBudget& b) const {
  const double hi = resolved_upper(b);
  const double acc = resolved_eps_acc(b);
  if (!(hi > 0.0)) throw ConfigError("targeted search: upper bound must be positive");
  if (!(acc > 0.0 && acc < hi)) throw ConfigError("targeted search: need 0 < eps_acc < upper bound");
}

void MmseConfig::validate() const {
  if (gamma_grid.empty()) throw ConfigError("MMSE: gamma grid must be non-empty");
  for (double g : gamma_grid)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("MMSE: gamma values must be finite and non-negative");
  if (lambda_mode == LambdaMode::Fixed && !(lambda >= 0.0)) throw ConfigError("MMSE: fixed lambda must be >= 0");
}

CVec fgm_gradient(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t label, Weighting weighting,
                  std::span<const cdouble> h) {
  CVec g = to_complex(model.input_gradient(to_real(r_t), label));
  if (weighting == Weighting::ConjChannel) {
    check_lengths(r_t, h);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= std::conj(h[i]);
  }
  const double n = norm2(g);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateGradientError("loss gradient is zero or non-finite");
  for (auto& z : g) z /= n;
  return g;
}

AttackOutcome targeted_noch(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            const PowerBudget& budget, const TargetedSearchConfig& cfg) {
  return targeted_search(model, r_t, true_label, {}, budget, cfg, AttackKind::NoCh);
}

AttackOutcome targeted_mrpp(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            std::span<const cdouble> h, const PowerBudget& budget, const TargetedSearchConfig& cfg) {
  check_lengths(r_t, h);
  return targeted_search(model, r_t, true_label, h, budget, cfg, AttackKind::MrppTargeted);
}

AttackOutcome targeted_channel_inversion(std::span<const cdouble> reference, std::span<const cdouble> h,
                                         const PowerBudget& budget) {
  budget.validate();
  check_lengths(reference, h);
  AttackOutcome out;
  out.kind = AttackKind::ChannelInversion;
  out.p_max = budget.p_max;
  out.reference.assign(reference.begin(), reference.end());
  const std::size_t p = reference.size();
  CVec q(p);
  for (std::size_t i = 0; i < p; ++i) {
    cdouble tap = h[i];
    if (std::abs(tap) < kTapFloor) {
      tap = std::abs(tap) > 0.0 ? tap / std::abs(tap) * kTapFloor : cdouble(kTapFloor, 0.0);
      ++out.diag.floored_taps;
    }
    q[i] = reference[i] / tap;
  }
  const double n = norm2(q);
  out.delta.assign(p, 0.0);
  if (n > 0.0) {
    const double alpha = budget.amplitude() / n;
    for (std::size_t i = 0; i < p; ++i) out.delta[i] = -alpha * q[i];
  }
  return out;
}

AttackOutcome targeted_channel_inversion(const AttackOutcome& noch, std::span<const cdouble> h,
                                         const PowerBudget& budget) {
  AttackOutcome out = targeted_channel_inversion(noch.reference, h, budget);
  out.target = noch.target;
  out.eps = noch.eps;
  out.feasible = noch.feasible;
  out.diag.iterations = noch.diag.iterations;
  out.diag.degenerate_gradient = noch.diag.degenerate_gradient;
  return out;
}

AttackOutcome solve_mmse(std::span<const cdouble> reference, std::span<const cdouble> h, const PowerBudget& budget,
                         double gamma, const MmseConfig& cfg, MmseSign sign) {
  budget.validate();
  cfg.validate();
  check_lengths(reference, h);
  if (!(gamma >= 0.0)) throw ConfigError("MMSE: gamma must be non-negative");
  const std::size_t p = reference.size();
  const double s = static_cast<double>(static_cast<int>(sign)) * gamma;

  auto delta_for = [&](double lambda) {
    CVec d(p);
    for (std::size_t i = 0; i < p; ++i) {
      const double den = std::norm(h[i]) + lambda;
      d[i] = den > 0.0 ? s * std::conj(h[i]) * reference[i] / den : cdouble(0.0, 0.0);
    }
    return d;
  };
  auto excess = [&](double lambda) { return energy(delta_for(lambda)) - budget.p_max; };

  AttackOutcome out;
  out.kind = sign == MmseSign::Targeted ? AttackKind::MmseTargeted : AttackKind::MmseNontargeted;
  out.p_max = budget.p_max;
  out.gamma = gamma;
  out.reference.assign(reference.begin(), reference.end());

  if (cfg.lambda_mode == LambdaMode::Fixed) {
    out.lambda = cfg.lambda;
    out.delta = delta_for(cfg.lambda);
    const double e = energy(out.delta);
    if (e > 0.0) {
      const double g = budget.amplitude() / std::sqrt(e);
      for (auto& z : out.delta) z *= g;
    }
    return out;
  }

  const double e0 = excess(0.0);
  if (std::isfinite(e0) && e0 <= 0.0) {
    out.lambda = 0.0;
    out.delta = delta_for(0.0);
    return out;
  }
  // ||delta(lambda)||^2 decreases monotonically in lambda; bracket the crossing
  // within a factor of two, then bisect to a relative width near machine precision.
  double lo = 1.0, hi = 1.0;
  if (excess(1.0) > 0.0) {
    while (excess(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (!std::isfinite(hi)) throw NumericError("MMSE: lambda bracket diverged");
    }
  } else {
    while (excess(lo) <= 0.0) {
      hi = lo;
      lo *= 0.5;
      if (lo < 1e-300) break;
    }
  }
  const BisectResult r = bisect([&](double lambda) { return excess(lambda) <= 0.0; }, lo, hi,
                                std::max(4e-16 * hi, std::numeric_limits<double>::min()));
  out.lambda = r.hi;
  out.delta = delta_for(r.hi);
  out.diag.iterations = r.iterations;
  return out;
}

double line_search_gamma(const ClassifierModel& model, std::span<const cdouble> r_t, std::span<const cdouble> reference,
                         std::span<const cdouble> h, const PowerBudget& budget, const MmseConfig& cfg,
                         const MmseObjective& objective) {
  cfg.validate();
  check_lengths(r_t, h);
  double best_gamma = cfg.gamma_grid.front();
  double best = -std::numeric_limits<double>::infinity();
  const double dir = objective.sign == MmseSign::Targeted ? -1.0 : 1.0;
  for (double gamma : cfg.gamma_grid) {
    const AttackOutcome o = solve_mmse(reference, h, budget, gamma, cfg, objective.sign);
    const CVec r_a = receive_noiseless(r_t, std::span<const cdouble>(o.delta), ones(r_t.size()), h);
    const double value = dir * model.loss(to_real(r_a), objective.label);
    if (value > best) {
      best = value;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

AttackOutcome targeted_mmse(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            std::span<const cdouble> h, const PowerBudget& budget, const TargetedSearchConfig& search,
                            const MmseConfig& cfg) {
  check_lengths(r_t, h);
  const AttackOutcome noch = targeted_noch(model, r_t, true_label, budget, search);
  if (!noch.target) {
    AttackOutcome out = noch;
    out.kind = AttackKind::MmseTargeted;
    return out;
  }
  const double gamma = line_search_gamma(model, r_t, noch.reference, h, budget, cfg, {MmseSign::Targeted, *noch.target});
  AttackOutcome out = solve_mmse(noch.reference, h, budget, gamma, cfg, MmseSign::Targeted);
  out.target = noch.target;
  out.eps = noch.eps;
  out.feasible = noch.feasible;
  out.diag.degenerate_gradient = noch.diag.degenerate_gradient;
  return out;
}

AttackOutcome nontargeted_naive(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                                const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h) {
  return nontargeted_iterative(model, r_t, true_label, budget, epochs, h, Weighting::None, AttackKind::NaiveNontargeted);
}

AttackOutcome nontargeted_mrpp(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                               const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h) {
  return nontargeted_iterative(model, r_t, true_label, budget, epochs, h, Weighting::ConjChannel,
                               AttackKind::MrppNontargeted);
}

AttackOutcome nontargeted_mmse(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                               const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h,
                               const MmseConfig& cfg) {
  check_lengths(r_t, h);
  const CVec identity = ones(r_t.size());
  const AttackOutcome base = nontargeted_naive(model, r_t, true_label, budget, epochs, identity);
  const double gamma =
      line_search_gamma(model, r_t, base.delta, h, budget, cfg, {MmseSign::Nontargeted, true_label});
  AttackOutcome out = solve_mmse(base.delta, h, budget, gamma, cfg, MmseSign::Nontargeted);
  out.diag.degenerate_gradient = base.diag.degenerate_gradient;
  out.diag.early_stop = base.diag.early_stop;
  return out;
}

void annotate(AttackOutcome& out, const ClassifierModel& model, std::span<const cdouble> r_t, std::span<const cdouble> h,
              std::size_t objective_label) {
  const CVec rx = apply_channel(h, out.delta);
  out.diag.received_power = energy(rx);
  out.diag.loss_before = model.loss(to_real(r_t), objective_label);
  CVec r_a(r_t.begin(), r_t.end());
  for (std::size_t i = 0; i < r_a.size(); ++i) r_a[i] += rx[i];
  out.diag.loss_after = model.loss(to_real(r_a), objective_label);
}

AttackOutcome craft_white_box(AttackKind kind, const ClassifierModel& model, std::span<const cdouble> r_t,
                              std::size_t true_label, std::span<const cdouble> h, const PowerBudget& budget,
                              const WhiteBoxSettings& settings) {
  check_lengths(r_t, h);
  AttackOutcome out;
  switch (kind) {
    case AttackKind::NoCh:
      out = targeted_noch(model, r_t, true_label, budget, settings.search);
      break;
    case AttackKind::ChannelInversion:
      out = targeted_channel_inversion(targeted_noch(model, r_t, true_label, budget, settings.search), h, budget);
      break;
    case AttackKind::MmseTargeted:
      out = targeted_mmse(model, r_t, true_label, h, budget, settings.search, settings.mmse);
      break;
    case AttackKind::MrppTargeted:
      out = targeted_mrpp(model, r_t, true_label, h, budget, settings.search);
      break;
    case AttackKind::NaiveNontargeted:
      out = nontargeted_naive(model, r_t, true_label, budget, settings.epochs, h);
      break;
    case AttackKind::MmseNontargeted:
      out = nontargeted_mmse(model, r_t, true_label, budget, settings.epochs, h, settings.mmse);
      break;
    case AttackKind::MrppNontargeted:
      out = nontargeted_mrpp(model, r_t, true_label, budget, settings.epochs, h);
      break;
    default:
      throw ConfigError("'" + std::string(to_string(kind)) + "' is not an input-specific white-box attack");
  }
  annotate(out, model, r_t, h, out.target.value_or(true_label));
  return out;
}

namespace {

nlohmann::json outcome_json(const AttackOutcome& out, const ClassifierModel* model) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(out.kind));
  j["p"] = out.delta.size();
  j["p_max"] = out.p_max;
  j["energy"] = energy(out.delta);
  j["feasible"] = out.feasible;
  if (out.target) {
    j["target_index"] = *out.target;
    if (model) j["target"] = std::string(to_string(model->spec().classes.at(*out.target)));
  }
  if (!out.eps.empty()) {
    j["eps"] = out.eps;
    if (model) {
      nlohmann::json table = nlohmann::json::object();
      for (std::size_t c = 0; c < out.eps.size() && c < model->num_classes(); ++c)
        table[std::string(to_string(model->spec().classes[c]))] = out.eps[c];
      j["eps_table"] = table;
    }
  }
  if (out.kind == AttackKind::MmseTargeted || out.kind == AttackKind::MmseNontargeted) {
    j["gamma"] = out.gamma;
    j["lambda"] = out.lambda;
  }
  j["diagnostics"] = {{"received_power", out.diag.received_power},
                      {"loss_before", out.diag.loss_before},
                      {"loss_after", out.diag.loss_after},
                      {"degenerate_gradient", out.diag.degenerate_gradient},
                      {"early_stop", out.diag.early_stop},
                      {"floored_taps", out.diag.floored_taps},
                      {"iterations", out.diag.iterations}};
  return j;
}

}  // namespace

std::string outcome_to_json(const AttackOutcome& out, const ClassifierModel* model) {
  return outcome_json(out, model).dump(2);
}

void save_outcome(const AttackOutcome& out, const std::filesystem::path& path) {
  nlohmann::json h;
  h["format"] = "ota-perturbation";
  h["version"] = 1;
  h["outcome"] = outcome_json(out, nullptr);
  std::vector<unsigned char> payload;
  for (const auto& z : out.delta) {
    detail::append_f64(payload, z.real());
    detail::append_f64(payload, z.imag());
  }
  detail::write_container(path, h, payload);
}

AttackOutcome load_outcome(const std::filesystem::path& path) {
  auto c = detail::read_container(path, "ota-perturbation", 1);
  AttackOutcome out;
  try {
    const auto& o = c.header.at("outcome");
    out.kind = parse_attack_kind(o.at("kind").get<std::string>());
    out.p_max = o.at("p_max").get<double>();
    out.feasible = o.at("feasible").get<bool>();
    if (o.contains("target_index")) out.target = o["target_index"].get<std::size_t>();
    if (o.contains("eps")) out.eps = o["eps"].get<std::vector<double>>();
    out.gamma = o.value("gamma", 1.0);
    out.lambda = o.value("lambda", 0.0);
    const auto p = o.at("p").get<std::size_t>();
    if (c.payload.size() != p * 16)
      throw CorruptFileError(path.string() + ": perturbation payload length does not match p=" + std::to_string(p));
    out.delta.resize(p);
    for (std::size_t i = 0; i < p; ++i) out.delta[i] = {detail::read_f64(c.payload, 2 * i), detail::read_f64(c.payload, 2 * i + 1)};
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(path.string() + ": malformed perturbation header (" + e.what() + ")");
  }
  return out;
}

}  // namespace ota
