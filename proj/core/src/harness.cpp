#include "ota/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ota/error.hpp"
#include "ota/numerics.hpp"

namespace ota {

std::string_view to_string(PnrReference r) { return r == PnrReference::Adversary ? "adversary" : "receiver"; }

PnrReference parse_pnr_reference(std::string_view s) {
  if (s == "adversary") return PnrReference::Adversary;
  if (s == "receiver") return PnrReference::Receiver;
  throw ConfigError("pnr_reference must be 'adversary' or 'receiver', got '" + std::string(s) + "'");
}

PowerBudget pnr_to_budget(double pnr_db, double sigma2, std::size_t p, PnrReference reference,
                          const ChannelModelParams& channel) {
  if (!(sigma2 > 0.0)) throw ConfigError("noise variance must be positive");
  double p_max = static_cast<double>(p) * sigma2 * std::pow(10.0, pnr_db / 10.0);
  if (reference == PnrReference::Receiver && p_max > 0.0) p_max /= mean_channel_gain(channel, p);
  return PowerBudget(p_max);
}

EvalSet build_eval_set(const std::vector<ModulationType>& classes, std::size_t count, std::size_t p,
                       std::size_t samples_per_symbol, std::uint64_t seed, Stream stream) {
  if (classes.empty()) throw ConfigError("evaluation set needs at least one class");
  EvalSet set;
  set.inputs.resize(count);
  set.labels.resize(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng(seed, stream, i);
    const std::size_t c = rng.below(classes.size());
    set.labels[i] = c;
    set.inputs[i] = synth_sample(classes[c], kNoiseless, p, rng, samples_per_symbol).iq;
  });
  return set;
}

namespace {

struct TrialResult {
  bool correct = false;
  double received_power = 0.0;
  bool flagged = false;
};

bool is_white_box(AttackKind k) {
  return k != AttackKind::None && k != AttackKind::LimitedChannel && !is_universal(k);
}

}  // namespace

SweepRow evaluate_accuracy(const ClassifierModel& model, const EvalSet& eval, const AttackSource& attack,
                           const PowerBudget& budget, const EvalSettings& settings) {
  if (eval.size() == 0) throw ConfigError("evaluation set is empty");
  if (settings.trials == 0) throw ConfigError("trials must be >= 1");
  const std::size_t p = eval.inputs.front().size();
  const NoiseSpec noise{settings.sigma2};
  noise.validate();
  const bool active = attack.fixed != nullptr || (attack.kind != AttackKind::None && budget.p_max > 0.0);
  if (attack.fixed && attack.fixed->size() != p) throw ShapeError("fixed perturbation length differs from p");

  EvalSet crafting;
  std::optional<UapPerturbation> shared;
  if (active && !attack.fixed && is_universal(attack.kind)) {
    crafting = build_eval_set(model.spec().classes, settings.uap_inputs, p, settings.samples_per_symbol, settings.seed,
                              Stream::CraftInput);
    if (attack.kind != AttackKind::UapInputs) {
      const ClassifierModel* source = &model;
      if (attack.kind == AttackKind::UapBlackbox) {
        if (!attack.substitute) throw ConfigError("uap-blackbox needs a substitute model");
        source = attack.substitute;
      }
      Rng rng(settings.seed, Stream::CraftChannel, 0);
      shared = craft_uap_limited(*source, crafting.inputs, crafting.labels, settings.channel, budget, rng, settings.uap);
    }
  }

  std::vector<TrialResult> results(settings.trials);
  parallel_for(settings.trials, [&](std::size_t t) {
    const std::size_t idx = t % eval.size();
    const CVec& x = eval.inputs[idx];
    const std::size_t label = eval.labels[idx];
    Rng ch(settings.seed, Stream::Channel, t);
    const CVec h_ar = sample_channel(settings.channel, p, ch).h;
    const CVec h_tr = sample_channel(settings.transmitter, p, ch).h;

    TrialResult& res = results[t];
    std::optional<CVec> delta;
    if (attack.fixed) {
      delta = *attack.fixed;
    } else if (active) {
      const CVec r_t = apply_channel(h_tr, x);
      try {
        if (is_white_box(attack.kind)) {
          AttackOutcome o = craft_white_box(attack.kind, model, r_t, label, h_ar, budget, settings.white_box);
          res.flagged = o.diag.degenerate_gradient;
          delta = std::move(o.delta);
        } else if (attack.kind == AttackKind::LimitedChannel) {
          Rng rng(settings.seed, Stream::CraftChannel, t + 1);
          delta = craft_limited_channel(model, r_t, label, settings.channel, settings.limited_draws, budget, rng,
                                        settings.uap)
                      .delta;
        } else if (attack.kind == AttackKind::UapInputs) {
          delta = craft_uap_inputs(model, crafting.inputs, crafting.labels, h_ar, budget, settings.uap).delta;
        } else {
          delta = shared->delta;
        }
      } catch (const Error&) {
        delta = CVec(p, 0.0);
        res.flagged = true;
      }
    }
    Rng nz(settings.seed, Stream::Noise, t);
    const CVec r = delta ? receive(x, std::span<const cdouble>(*delta), h_tr, h_ar, noise, nz)
                         : receive(x, std::nullopt, h_tr, h_ar, noise, nz);
    res.correct = predict_index(model, r) == label;
    if (delta) res.received_power = energy(apply_channel(h_ar, *delta));
  });

  SweepRow row;
  row.attack = attack.kind;
  row.trials = settings.trials;
  row.seed = settings.seed;
  double power = 0.0;
  for (const auto& r : results) {
    row.correct += r.correct ? 1 : 0;
    row.flagged += r.flagged ? 1 : 0;
    power += r.received_power;
  }
  row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.trials);
  row.mean_received_power = power / static_cast<double>(row.trials);
  return row;
}

namespace {

bool needs_substitute(const SweepConfig& cfg) {
  return std::find(cfg.attacks.begin(), cfg.attacks.end(), AttackKind::UapBlackbox) != cfg.attacks.end();
}

// Everything except where the substitute model comes from.
void validate_grid(const SweepConfig& cfg) {
  const auto& attacks = cfg.attacks;
  const auto& eval = cfg.eval;
  if (attacks.empty()) throw ConfigError("sweep: attack list is empty");
  if (cfg.pnr_grid.empty()) throw ConfigError("sweep: PNR grid is empty");
  for (double v : cfg.pnr_grid)
    if (!std::isfinite(v)) throw ConfigError("sweep: PNR values must be finite");
  if (!std::isfinite(cfg.snr_db)) throw ConfigError("sweep: SNR must be finite");
  if (cfg.trials == 0) throw ConfigError("sweep: trials must be >= 1");
  cfg.channel.validate();
  if (!(eval.white_box.search.eps_acc_fraction > 0.0 && eval.white_box.search.eps_acc_fraction < 1.0))
    throw ConfigError("sweep: eps_acc_fraction must lie in (0, 1)");
  eval.white_box.mmse.validate();
  if (eval.white_box.epochs == 0) throw ConfigError("sweep: epochs must be >= 1");
  if (eval.limited_draws < 2 || eval.uap_inputs < 2) throw ConfigError("sweep: N must be >= 2");
}

}  // namespace

void SweepConfig::validate() const {
  validate_grid(*this);
  if (needs_substitute(*this) && substitute_path.empty())
    throw ConfigError("sweep: uap-blackbox requires 'substitute'");
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  if (cfg.model_path.empty()) throw ConfigError("sweep: 'model' is required");
  const ClassifierModel model = load_model(cfg.model_path);
  std::optional<ClassifierModel> substitute;
  if (!cfg.substitute_path.empty()) substitute = load_model(cfg.substitute_path);
  return run_sweep(cfg, model, substitute ? &*substitute : nullptr);
}

SweepResult run_sweep(const SweepConfig& cfg, const ClassifierModel& model, const ClassifierModel* substitute) {
  validate_grid(cfg);
  if (needs_substitute(cfg) && !substitute) throw ConfigError("sweep: uap-blackbox requires a substitute model");
  if (cfg.threads) set_max_threads(cfg.threads);
  EvalSettings settings = cfg.eval;
  settings.channel = cfg.channel;
  settings.sigma2 = NoiseSpec::from_snr_db(cfg.snr_db).sigma2;
  settings.trials = cfg.trials;
  settings.seed = cfg.seed;
  const std::size_t p = model.spec().p;
  const EvalSet eval =
      build_eval_set(model.spec().classes, cfg.trials, p, settings.samples_per_symbol, cfg.seed, Stream::EvalInput);

  std::vector<AttackKind> kinds = cfg.attacks;
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  std::vector<double> grid = cfg.pnr_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  SweepResult result;
  for (AttackKind k : kinds) {
    for (double pnr : grid) {
      const PowerBudget budget = pnr_to_budget(pnr, settings.sigma2, p, cfg.pnr_reference, cfg.channel);
      SweepRow row = evaluate_accuracy(model, eval, {k, substitute, nullptr}, budget, settings);
      row.pnr_db = pnr;
      row.snr_db = cfg.snr_db;
      result.rows.push_back(row);
    }
  }
  if (!cfg.output.empty()) write_csv(result, cfg.output);
  return result;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string to_csv(const SweepResult& result) {
  std::string out;
  out += kCsvVersionLine;
  out += '\n';
  out += kCsvHeader;
  out += '\n';
  for (const auto& r : result.rows) {
    out += to_string(r.attack);
    out += ',' + fmt("%.2f", r.pnr_db) + ',' + fmt("%.2f", r.snr_db) + ',' + fmt("%.6f", r.accuracy) + ',' +
           std::to_string(r.trials) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

void write_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << to_csv(result);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace ota
