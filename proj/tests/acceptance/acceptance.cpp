// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Desk models are trained in-process from a fixed
// recipe, so the run is deterministic.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ota/attack.hpp"
#include "ota/channel.hpp"
#include "ota/classifier.hpp"
#include "ota/error.hpp"
#include "ota/harness.hpp"
#include "ota/numerics.hpp"
#include "ota/signal.hpp"
#include "ota/universal.hpp"

using namespace ota;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;
std::vector<int> g_only;

void report(int id, const std::string& name, const std::function<Verdict()>& check) {
  if (!g_only.empty() && std::find(g_only.begin(), g_only.end(), id) == g_only.end()) return;
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++g_failures;
  std::printf("%s %2d %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double pts(double acc) { return 100.0 * acc; }

// Desk recipe: the eight digital classes over an SNR grid, default architecture.
GenerationSpec desk_data(std::uint64_t seed) {
  GenerationSpec g;
  g.snr_grid = {2.0, 6.0, 10.0, 14.0, 18.0};
  g.per_class = 600;
  g.seed = seed;
  return g;
}

ClassifierModel train_desk(std::uint64_t data_seed, std::uint64_t arch_seed, double* test_acc = nullptr) {
  ArchitectureSpec a;
  a.seed = arch_seed;
  ClassifierModel m(a);
  TrainConfig t;
  t.epochs = 12;
  t.optimizer = Optimizer::Adam;
  t.learning_rate = 0.002;
  t.seed = data_seed;
  const TrainingReport r = train(m, build_dataset(desk_data(data_seed)), t);
  m.round_to_f32();
  if (test_acc) *test_acc = r.test_accuracy;
  return m;
}

CVec random_channel(Rng& rng, std::size_t p) {
  ChannelModelParams c;
  c.d = rng.uniform(2.0, 50.0);
  c.shadow_sigma_db = rng.uniform(0.0, 10.0);
  c.normalize_gain = rng.uniform() < 0.5;
  return sample_channel(c, p, rng).h;
}

CVec noisy_input(const ClassifierModel& m, Rng& rng, std::size_t* label) {
  *label = rng.below(m.num_classes());
  return synth_sample(m.spec().classes[*label], rng.uniform(0.0, 20.0), m.spec().p, rng).iq;
}

double max_abs_diff(const CVec& a, const CVec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

CVec scaled(CVec v, double a) {
  for (auto& z : v) z *= a;
  return v;
}

// ---- 1
Verdict gradient_fidelity(const ClassifierModel& m) {
  Rng rng(101);
  double worst = 0.0;
  const double step = 1e-6;
  for (int k = 0; k < 100; ++k) {
    std::size_t y;
    const RVec x = to_real(noisy_input(m, rng, &y));
    const std::size_t label = rng.below(m.num_classes());
    const RVec g = m.input_gradient(x, label);
    RVec xp = x;
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t i = 0; i < xp.size(); ++i) {
      const double keep = xp[i];
      xp[i] = keep + step;
      const double up = m.loss(xp, label);
      xp[i] = keep - step;
      const double down = m.loss(xp, label);
      xp[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      diff += (fd - g[i]) * (fd - g[i]);
      na += g[i] * g[i];
      nf += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-300}));
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " over 100 pairs"};
}

// ---- 2
Verdict mmse_kkt() {
  Rng rng(202);
  double worst = 0.0, worst_power = 0.0;
  bool lambda_ok = true;
  int active = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t p = 128;
    const CVec h = random_channel(rng, p);
    const PowerBudget b(std::pow(10.0, rng.uniform(-1.0, 2.0)));
    // A NoCh-style reference: full budget along a random unit direction.
    CVec d(p);
    for (auto& z : d) z = rng.complex_normal(1.0);
    const double scale = b.amplitude() / norm2(d);
    for (auto& z : d) z *= scale;
    const double gamma = rng.uniform(0.5, 2.0);
    const MmseSign sign = k % 2 ? MmseSign::Nontargeted : MmseSign::Targeted;
    const double s = static_cast<double>(static_cast<int>(sign));
    const AttackOutcome o = solve_mmse(d, h, b, gamma, {}, sign);
    lambda_ok = lambda_ok && o.lambda >= 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const cdouble r = std::conj(h[i]) * (h[i] * o.delta[i] - s * gamma * d[i]) + o.lambda * o.delta[i];
      worst = std::max(worst, std::abs(r));
    }
    if (o.lambda > 0.0) {
      ++active;
      worst_power = std::max(worst_power, std::abs(energy(o.delta) - b.p_max) / b.p_max);
    }
  }
  const bool ok = worst < 1e-8 && lambda_ok && worst_power < 1e-8;
  return {ok, "max stationarity residual " + fmt("%.3g", worst) + ", lambda >= 0: " + (lambda_ok ? "yes" : "no") +
                  ", active constraints " + std::to_string(active) + " with max power error " +
                  fmt("%.3g", worst_power)};
}

// ---- 3
Verdict reductions(const ClassifierModel& m) {
  Rng rng(303);
  const CVec one(m.spec().p, 1.0);
  double eps_gap = 0.0, vec_gap = 0.0;
  int shrunk = 0;
  std::string worst = "none";
  auto track = [&](const char* name, const CVec& a, const CVec& b) {
    const double g = max_abs_diff(a, b);
    if (g > vec_gap) {
      vec_gap = g;
      worst = name;
    }
  };
  for (int k = 0; k < 40; ++k) {
    std::size_t y;
    const CVec x = noisy_input(m, rng, &y);
    const PowerBudget b(std::pow(10.0, rng.uniform(0.0, 2.5)));
    const double acc = TargetedSearchConfig{}.resolved_eps_acc(b);
    const AttackOutcome noch = targeted_noch(m, x, y, b);
    const AttackOutcome mrpp = targeted_mrpp(m, x, y, one, b);
    for (std::size_t c = 0; c < noch.eps.size(); ++c) eps_gap = std::max(eps_gap, std::abs(noch.eps[c] - mrpp.eps[c]) / acc);
    track("mrpp-targeted", noch.delta, mrpp.delta);
    track("channel-inversion", noch.delta, targeted_channel_inversion(noch, one, b).delta);
    // At gamma = 1 the identity-channel MMSE fit is the AWGN perturbation itself;
    // a searched gamma below 1 shrinks it to gamma times that perturbation.
    MmseConfig unit;
    unit.gamma_grid = {1.0};
    const AttackOutcome mmse = targeted_mmse(m, x, y, one, b, {}, unit);
    for (std::size_t c = 0; c < noch.eps.size(); ++c) eps_gap = std::max(eps_gap, std::abs(noch.eps[c] - mmse.eps[c]) / acc);
    track("mmse-targeted", noch.delta, mmse.delta);
    const AttackOutcome searched = targeted_mmse(m, x, y, one, b);
    shrunk += searched.gamma < 1.0;
    track("mmse-targeted searched", scaled(noch.delta, std::min(searched.gamma, 1.0)), searched.delta);

    const AttackOutcome naive = nontargeted_naive(m, x, y, b, 4, one);
    track("mrpp-nontargeted", naive.delta, nontargeted_mrpp(m, x, y, b, 4, one).delta);
    track("mmse-nontargeted", naive.delta, nontargeted_mmse(m, x, y, b, 4, one, unit).delta);
    const AttackOutcome nsearched = nontargeted_mmse(m, x, y, b, 4, one);
    shrunk += nsearched.gamma < 1.0;
    track("mmse-nontargeted searched", scaled(naive.delta, std::min(nsearched.gamma, 1.0)), nsearched.delta);
  }
  // eps_gap is in units of eps_acc.
  return {eps_gap <= 1.0 && vec_gap < 1e-9, "max eps difference " + fmt("%.3g", eps_gap) +
                                                " eps_acc, max vector difference " + fmt("%.3g", vec_gap) + " (" +
                                                worst + "), searched gamma below 1 in " + std::to_string(shrunk) + " of 80"};
}

// ---- 4
// Oracle: plain power iteration on D^T D from a random start.
Eigen::VectorXd oracle_direction(const Eigen::MatrixXd& d, Rng& rng) {
  const Eigen::MatrixXd g = d.transpose() * d;
  Eigen::VectorXd v(g.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();
  for (int it = 0; it < 1000000; ++it) {
    Eigen::VectorXd w = g * v;
    w.normalize();
    const double change = (w - v).cwiseAbs().maxCoeff();
    v = w;
    if (change < 1e-15) break;
  }
  return v;
}

Verdict pca_oracle() {
  Rng rng(404);
  double worst = 1.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t rows = 2 + rng.below(63);
    const std::size_t cols = 2 * (1 + rng.below(128));
    Eigen::MatrixXd d(rows, cols);
    // Noise around a shared direction of random strength, like a crafting stack.
    Eigen::VectorXd common(cols);
    for (std::size_t c = 0; c < cols; ++c) common(static_cast<Eigen::Index>(c)) = rng.normal();
    const double strength = rng.uniform(0.0, 3.0);
    RealMatrix m;
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = strength * rng.normal();
      for (std::size_t c = 0; c < cols; ++c)
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a * common(static_cast<Eigen::Index>(c)) + rng.normal();
      RVec row(cols);
      for (std::size_t c = 0; c < cols; ++c) row[c] = d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      m.append_row(row);
    }
    const RVec v = to_real(principal_direction(m, false));
    const Eigen::VectorXd o = oracle_direction(d, rng);
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += v[c] * o(static_cast<Eigen::Index>(c));
    worst = std::min(worst, std::abs(dot));
  }
  double rank1 = 1.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t rows = 2 + rng.below(63);
    const std::size_t cols = 2 * (1 + rng.below(128));
    RVec u(cols);
    for (auto& e : u) e = rng.normal();
    double n = 0.0;
    for (double e : u) n += e * e;
    for (auto& e : u) e /= std::sqrt(n);
    RealMatrix m;
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = rng.uniform(0.1, 5.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      RVec row(cols);
      for (std::size_t c = 0; c < cols; ++c) row[c] = a * u[c];
      m.append_row(row);
    }
    const RVec v = to_real(principal_direction(m, false));
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += v[c] * u[c];
    rank1 = std::min(rank1, std::abs(dot));
  }
  return {1.0 - worst < 1e-8 && 1.0 - rank1 < 1e-12,
          "min |cos| random " + fmt("%.15f", worst) + ", rank-1 " + fmt("%.15f", rank1)};
}

// ---- 5
Verdict budget_safety(const ClassifierModel& m, const ClassifierModel& substitute) {
  const std::size_t p = m.spec().p;
  double worst = 0.0;
  std::size_t crafted = 0;
  std::string worst_kind = "none";
  for (const AttackKind kind : kAttackKinds) {
    std::vector<double> ratio(200, 0.0);
    parallel_for(200, [&](std::size_t k) {
      Rng rng(derive_seed(505, Stream::EvalInput, k));
      std::size_t y;
      const CVec x = noisy_input(m, rng, &y);
      const CVec h = random_channel(rng, p);
      const PowerBudget b(std::pow(10.0, rng.uniform(-2.0, 3.0)));
      ChannelModelParams ch;
      ch.d = rng.uniform(2.0, 50.0);
      UapSettings us;
      std::vector<CVec> inputs;
      std::vector<std::size_t> labels;
      for (int n = 0; n < 6; ++n) {
        std::size_t l;
        inputs.push_back(noisy_input(m, rng, &l));
        labels.push_back(l);
      }
      CVec delta;
      switch (kind) {
        case AttackKind::LimitedChannel:
          delta = craft_limited_channel(m, x, y, ch, 6, b, rng, us).delta;
          break;
        case AttackKind::UapInputs:
          delta = craft_uap_inputs(m, inputs, labels, h, b, us).delta;
          break;
        case AttackKind::UapLimited:
          delta = craft_uap_limited(m, inputs, labels, ch, b, rng, us).delta;
          break;
        case AttackKind::UapBlackbox:
          delta = blackbox_uap(substitute, inputs, labels, ch, b, rng, us).delta;
          break;
        default:
          delta = craft_white_box(kind, m, x, y, h, b).delta;
      }
      ratio[k] = energy(delta) / b.p_max;
    });
    crafted += ratio.size();
    for (double r : ratio)
      if (r > worst) {
        worst = r;
        worst_kind = std::string(to_string(kind));
      }
  }
  return {worst <= 1.0 + 1e-9, std::to_string(crafted) + " perturbations, max energy/p_max " + fmt("%.15f", worst) +
                                   " (" + worst_kind + ")"};
}

// ---- sweeps
SweepConfig base_sweep(std::vector<AttackKind> attacks, std::vector<double> pnr) {
  SweepConfig cfg;
  cfg.attacks = std::move(attacks);
  cfg.pnr_grid = std::move(pnr);
  cfg.snr_db = 10.0;
  cfg.trials = 500;
  cfg.seed = 606;
  cfg.pnr_reference = PnrReference::Receiver;
  return cfg;
}

double accuracy_of(const SweepResult& r, AttackKind k, double pnr) {
  for (const auto& row : r.rows)
    if (row.attack == k && row.pnr_db == pnr) return row.accuracy;
  throw NumericError("missing sweep row");
}

Verdict fig1(const ClassifierModel& m) {
  const SweepResult r = run_sweep(
      base_sweep({AttackKind::None, AttackKind::NoCh, AttackKind::ChannelInversion, AttackKind::MrppTargeted}, {0.0}), m,
      nullptr);
  const double none = pts(accuracy_of(r, AttackKind::None, 0.0));
  const double noch = pts(accuracy_of(r, AttackKind::NoCh, 0.0));
  const double ci = pts(accuracy_of(r, AttackKind::ChannelInversion, 0.0));
  const double mrpp = pts(accuracy_of(r, AttackKind::MrppTargeted, 0.0));
  const bool close = noch >= none - 5.0;
  const bool order = mrpp + 3.0 <= ci && ci + 3.0 <= none;
  return {close && order, "none " + fmt("%.1f", none) + ", noch " + fmt("%.1f", noch) + ", channel-inversion " +
                              fmt("%.1f", ci) + ", mrpp-targeted " + fmt("%.1f", mrpp) + " (noch within 5 points: " +
                              (close ? "yes" : "no") + ", ordering with 3-point gaps: " + (order ? "yes" : "no") + ")"};
}

Verdict fig2(const ClassifierModel& m) {
  const std::vector<double> grid{-10.0, -5.0, 0.0, 5.0, 10.0};
  const SweepResult r = run_sweep(base_sweep({AttackKind::MrppTargeted, AttackKind::MrppNontargeted}, grid), m, nullptr);
  bool ok = true;
  std::ostringstream s;
  for (double pnr : grid) {
    const double t = pts(accuracy_of(r, AttackKind::MrppTargeted, pnr));
    const double n = pts(accuracy_of(r, AttackKind::MrppNontargeted, pnr));
    ok = ok && n <= t;
    s << (pnr == grid.front() ? "" : ", ") << fmt("%g", pnr) << " dB: nontargeted " << fmt("%.1f", n) << " vs targeted "
      << fmt("%.1f", t);
  }
  return {ok, s.str()};
}

Verdict fig3(const ClassifierModel& m, const ClassifierModel& substitute) {
  SweepConfig cfg =
      base_sweep({AttackKind::UapInputs, AttackKind::UapLimited, AttackKind::UapBlackbox}, {0.0, 10.0});
  cfg.eval.uap_inputs = 40;
  const SweepResult r = run_sweep(cfg, m, &substitute);
  bool ok = true;
  std::ostringstream s;
  for (double pnr : cfg.pnr_grid) {
    const double exact = pts(accuracy_of(r, AttackKind::UapInputs, pnr));
    const double lim = pts(accuracy_of(r, AttackKind::UapLimited, pnr));
    const double bb = pts(accuracy_of(r, AttackKind::UapBlackbox, pnr));
    ok = ok && exact <= lim && std::abs(lim - bb) <= 5.0;
    s << (pnr == 0.0 ? "" : ", ") << fmt("%g", pnr) << " dB: exact " << fmt("%.1f", exact) << ", limited "
      << fmt("%.1f", lim) << ", black-box " << fmt("%.1f", bb);
  }
  return {ok, s.str()};
}

Verdict baseline(const ClassifierModel& m, double train_run_test_acc) {
  GenerationSpec g;
  g.snr_grid = {10.0};
  g.per_class = 250;
  g.seed = 909;
  const double acc = evaluate(m, build_dataset(g));
  return {acc >= 0.80, "clean accuracy at 10 dB " + fmt("%.1f", pts(acc)) + "% on a held-out set (grid test split " +
                           fmt("%.1f", pts(train_run_test_acc)) + "%)"};
}

Verdict golden() {
  const std::filesystem::path dir = OTA_EXAMPLE_DIR;
  SweepConfig cfg = load_sweep_config(dir / "example_sweep.json");
  cfg.output.clear();
  const std::string csv = to_csv(run_sweep(cfg));
  std::ifstream f(dir / "golden.csv", std::ios::binary);
  if (!f) return {false, "missing golden.csv"};
  const std::string want((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const bool same = csv == want;
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  return {same, std::to_string(lines) + " lines, " + (same ? "byte-identical" : "differs from golden")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional list of criterion numbers to run; all by default.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  g_only = only;

  std::printf("training desk model and substitute...\n");
  std::fflush(stdout);
  double test_acc = 0.0;
  const ClassifierModel model = train_desk(1, 1, &test_acc);
  const ClassifierModel substitute = train_desk(2, 2);

  report(1, "gradient fidelity", [&] { return gradient_fidelity(model); });
  report(2, "MMSE KKT suite", mmse_kkt);
  report(3, "reduction equivalence", [&] { return reductions(model); });
  report(4, "PCA oracle", pca_oracle);
  report(5, "budget safety", [&] { return budget_safety(model, substitute); });
  report(6, "channel-unaware vs channel-aware targeted", [&] { return fig1(model); });
  report(7, "non-targeted vs targeted MRPP", [&] { return fig2(model); });
  report(8, "UAP with exact, limited and no model knowledge", [&] { return fig3(model, substitute); });
  report(9, "classifier baseline", [&] { return baseline(model, test_acc); });
  report(10, "end-to-end determinism", golden);

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
