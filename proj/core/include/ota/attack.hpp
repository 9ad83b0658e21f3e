#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ota/classifier.hpp"
#include "ota/types.hpp"

namespace ota {

enum class AttackKind {
  None,
  NoCh,
  ChannelInversion,
  MmseTargeted,
  MrppTargeted,
  NaiveNontargeted,
  MmseNontargeted,
  MrppNontargeted,
  LimitedChannel,
  UapInputs,
  UapLimited,
  UapBlackbox,
};

/// The eleven attack kinds (everything except None), in CLI order.
inline constexpr std::array<AttackKind, 11> kAttackKinds = {
    AttackKind::NoCh,          AttackKind::ChannelInversion, AttackKind::MmseTargeted,    AttackKind::MrppTargeted,
    AttackKind::NaiveNontargeted, AttackKind::MmseNontargeted, AttackKind::MrppNontargeted, AttackKind::LimitedChannel,
    AttackKind::UapInputs,     AttackKind::UapLimited,       AttackKind::UapBlackbox};

std::string_view to_string(AttackKind k);
AttackKind parse_attack_kind(std::string_view name);  // throws ConfigError listing valid kinds
std::string attack_kind_list();                        // "noch, channel-inversion, ..."
bool is_targeted(AttackKind k);
bool is_universal(AttackKind k);  // crafted once and reused across inputs

/// Total perturbation energy limit: ||delta||^2 <= p_max.
struct PowerBudget {
  double p_max = 1.0;
  explicit PowerBudget(double p) : p_max(p) {}
  double amplitude() const;  // sqrt(p_max)
  void validate() const;     // throws ConfigError unless p_max > 0
};

/// Per-class bisection of the decision-flipping scale along each FGM direction.
struct TargetedSearchConfig {
  std::optional<double> eps_acc;        // absolute tolerance; default eps_acc_fraction * upper
  double eps_acc_fraction = 1.0 / 1024.0;
  std::optional<double> upper;          // initial eps_max; default p_max
  bool minimum_power = false;           // scale the output by eps[target] instead of sqrt(p_max)

  double resolved_upper(const PowerBudget& b) const { return upper.value_or(b.p_max); }
  double resolved_eps_acc(const PowerBudget& b) const { return eps_acc.value_or(eps_acc_fraction * resolved_upper(b)); }
  void validate(const PowerBudget& b) const;
};

enum class LambdaMode { PowerConstrained, Fixed };

struct MmseConfig {
  std::vector<double> gamma_grid{0.5, 1.0, 1.5, 2.0};
  LambdaMode lambda_mode = LambdaMode::PowerConstrained;
  double lambda = 1.2;  // Fixed mode only
  void validate() const;
};

struct AttackDiagnostics {
  double received_power = 0.0;  // ||H delta||^2
  double loss_before = 0.0;     // objective-label loss at r_t
  double loss_after = 0.0;      // objective-label loss at r_t + H delta
  bool degenerate_gradient = false;
  bool early_stop = false;
  std::size_t floored_taps = 0;
  std::size_t iterations = 0;  // total bisection iterations or gradient steps
};

struct AttackOutcome {
  CVec delta;
  AttackKind kind = AttackKind::None;
  double p_max = 0.0;
  std::optional<std::size_t> target;  // targeted attacks
  std::vector<double> eps;            // per-class scale table (targeted search); eps[true] = upper
  bool feasible = true;               // a decision flip was found within the search range
  double gamma = 1.0;                 // MMSE
  double lambda = 0.0;                // MMSE
  // Unsigned FGM reference: sqrt(p_max) times the unit ascent direction of the
  // objective loss. The AWGN attack is -reference (targeted) or +reference.
  CVec reference;
  AttackDiagnostics diag;
};

enum class Weighting { None, ConjChannel };

/// Unit-norm complex gradient direction: normalize(grad) or normalize(conj(h) .* grad),
/// pairing the real gradient as g_I + j g_Q. Throws DegenerateGradientError on a zero gradient.
CVec fgm_gradient(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t label, Weighting weighting,
                  std::span<const cdouble> h = {});

/// Targeted search with H = I (the channel-unaware baseline).
AttackOutcome targeted_noch(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            const PowerBudget& budget, const TargetedSearchConfig& cfg = {});

/// Targeted search with conjugate-channel weighted directions.
AttackOutcome targeted_mrpp(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            std::span<const cdouble> h, const PowerBudget& budget, const TargetedSearchConfig& cfg = {});

/// delta = -alpha (reference ./ h), alpha = sqrt(p_max) / ||reference ./ h||.
/// Taps with |h_i| < 1e-12 are floored to 1e-12 (counted in diag.floored_taps).
AttackOutcome targeted_channel_inversion(std::span<const cdouble> reference, std::span<const cdouble> h,
                                         const PowerBudget& budget);
AttackOutcome targeted_channel_inversion(const AttackOutcome& noch, std::span<const cdouble> h,
                                         const PowerBudget& budget);

enum class MmseSign { Targeted = -1, Nontargeted = +1 };

/// Closed-form KKT solution delta_i = s gamma conj(h_i) d_i / (|h_i|^2 + lambda) of
///   min || H delta - s gamma d ||^2  s.t. ||delta||^2 <= p_max.
/// Power-constrained mode bisects lambda; fixed mode rescales to the budget.
AttackOutcome solve_mmse(std::span<const cdouble> reference, std::span<const cdouble> h, const PowerBudget& budget,
                         double gamma, const MmseConfig& cfg, MmseSign sign);

struct MmseObjective {
  MmseSign sign = MmseSign::Targeted;
  std::size_t label = 0;  // target class (targeted) or true class (non-targeted)
};

/// Grid search over gamma: minimizes the target-label loss (targeted) or maximizes
/// the true-label loss (non-targeted) at r_t + H delta. Ties keep the earlier grid entry.
double line_search_gamma(const ClassifierModel& model, std::span<const cdouble> r_t, std::span<const cdouble> reference,
                         std::span<const cdouble> h, const PowerBudget& budget, const MmseConfig& cfg,
                         const MmseObjective& objective);

AttackOutcome targeted_mmse(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                            std::span<const cdouble> h, const PowerBudget& budget, const TargetedSearchConfig& search = {},
                            const MmseConfig& cfg = {});

/// E gradient steps of sqrt(p_max/E) through H, accumulated and rescaled.
AttackOutcome nontargeted_naive(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                                const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h);
/// The iterative attack with conj(h)-weighted step directions.
AttackOutcome nontargeted_mrpp(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                               const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h);
/// MMSE fit of the H = I naive attack through h, with the non-targeted sign.
AttackOutcome nontargeted_mmse(const ClassifierModel& model, std::span<const cdouble> r_t, std::size_t true_label,
                               const PowerBudget& budget, std::size_t epochs, std::span<const cdouble> h,
                               const MmseConfig& cfg = {});

struct WhiteBoxSettings {
  TargetedSearchConfig search;
  MmseConfig mmse;
  std::size_t epochs = 4;  // non-targeted steps E
};

/// Dispatch for the seven input-specific attacks (NoCh .. MrppNontargeted).
AttackOutcome craft_white_box(AttackKind kind, const ClassifierModel& model, std::span<const cdouble> r_t,
                              std::size_t true_label, std::span<const cdouble> h, const PowerBudget& budget,
                              const WhiteBoxSettings& settings = {});

/// Fills diag.received_power / loss_before / loss_after for the given objective label.
void annotate(AttackOutcome& out, const ClassifierModel& model, std::span<const cdouble> r_t, std::span<const cdouble> h,
              std::size_t objective_label);

std::string outcome_to_json(const AttackOutcome& out, const ClassifierModel* model = nullptr);
/// JSON header (diagnostics) + float64 interleaved delta payload.
void save_outcome(const AttackOutcome& out, const std::filesystem::path& path);
AttackOutcome load_outcome(const std::filesystem::path& path);

}  // namespace ota
