#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ota/attack.hpp"
#include "ota/channel.hpp"
#include "ota/classifier.hpp"
#include "ota/signal.hpp"
#include "ota/universal.hpp"

namespace ota {

/// Where the PNR denominator is measured: perturbation power at the adversary,
/// or at the receiver after the mean channel gain.
enum class PnrReference { Adversary, Receiver };

std::string_view to_string(PnrReference r);
PnrReference parse_pnr_reference(std::string_view s);

/// p_max = p sigma2 10^(pnr/10), divided by the mean channel power gain for the
/// receiver reference. pnr = -inf gives 0.
PowerBudget pnr_to_budget(double pnr_db, double sigma2, std::size_t p, PnrReference reference,
                          const ChannelModelParams& channel);

/// Noise-free evaluation inputs (unit power) with labels as model class indices.
struct EvalSet {
  std::vector<CVec> inputs;
  std::vector<std::size_t> labels;
  std::size_t size() const { return inputs.size(); }
};

/// Item i is synthesized from Rng(seed, stream, i) with a uniformly drawn class.
EvalSet build_eval_set(const std::vector<ModulationType>& classes, std::size_t count, std::size_t p,
                       std::size_t samples_per_symbol, std::uint64_t seed, Stream stream = Stream::EvalInput);

struct EvalSettings {
  ChannelModelParams channel;                                    // adversary -> receiver
  ChannelModelParams transmitter = ChannelModelParams::identity();  // transmitter -> receiver
  double sigma2 = 0.1;
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  WhiteBoxSettings white_box;
  std::size_t limited_draws = 40;  // N for the limited-channel attack
  std::size_t uap_inputs = 40;     // N for the three UAP kinds
  UapSettings uap;
  std::size_t samples_per_symbol = kDefaultSamplesPerSymbol;
};

/// What is transmitted by the adversary in each trial.
struct AttackSource {
  AttackKind kind = AttackKind::None;
  const ClassifierModel* substitute = nullptr;  // uap-blackbox
  const CVec* fixed = nullptr;                  // apply this perturbation unchanged to every trial
};

struct SweepRow {
  AttackKind attack = AttackKind::None;
  double pnr_db = 0.0;
  double snr_db = 0.0;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t trials = 0;
  double mean_received_power = 0.0;  // mean ||H_ar delta||^2
  std::size_t flagged = 0;           // trials whose crafting failed or fell back
  std::uint64_t seed = 0;
};

/// Trial t uses eval item t mod |eval|, channel Rng(seed, Channel, t) and noise
/// Rng(seed, Noise, t) for every attack kind, so rows at equal seed are paired.
/// Input-specific attacks are crafted on the noiseless H_tr x. uap-inputs is
/// crafted per trial channel from the crafting inputs; uap-limited and
/// uap-blackbox are crafted once and reused for every trial.
SweepRow evaluate_accuracy(const ClassifierModel& model, const EvalSet& eval, const AttackSource& attack,
                           const PowerBudget& budget, const EvalSettings& settings);

struct SweepConfig {
  std::vector<AttackKind> attacks;
  std::vector<double> pnr_grid;
  double snr_db = 10.0;
  std::size_t trials = 500;
  ChannelModelParams channel;
  std::filesystem::path model_path;
  std::filesystem::path substitute_path;  // required for uap-blackbox
  std::filesystem::path output;           // CSV; empty means do not write
  std::uint64_t seed = 1;
  PnrReference pnr_reference = PnrReference::Receiver;
  std::size_t threads = 0;
  EvalSettings eval;  // channel, sigma2, trials and seed are filled from the fields above

  void validate() const;  // throws ConfigError
};

/// Parses the JSON experiment config. Relative paths resolve against the config's directory.
SweepConfig load_sweep_config(const std::filesystem::path& path);
SweepConfig parse_sweep_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// JSON object with the keys of the "channel" section of a sweep config.
ChannelModelParams parse_channel_params(const std::string& text);

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (attack, pnr)
};

/// Loads the models (failing before any evaluation), evaluates the full grid and
/// writes the CSV if cfg.output is set.
SweepResult run_sweep(const SweepConfig& cfg);
/// Same with models supplied in memory.
SweepResult run_sweep(const SweepConfig& cfg, const ClassifierModel& model, const ClassifierModel* substitute);

inline constexpr std::string_view kCsvVersionLine = "# ota-sweep v1";
inline constexpr std::string_view kCsvHeader = "attack,pnr_db,snr_db,accuracy,trials,seed";

std::string to_csv(const SweepResult& result);
void write_csv(const SweepResult& result, const std::filesystem::path& path);

/// Parses a sweep CSV. Throws ParseError naming the offending line.
SweepResult parse_csv(const std::string& text);
SweepResult read_csv(const std::filesystem::path& path);

/// Accuracy-vs-PNR line plot, one polyline per attack kind.
std::string render_plot(const SweepResult& result);
void emit_plot(const std::filesystem::path& csv, const std::filesystem::path& out);

}  // namespace ota
