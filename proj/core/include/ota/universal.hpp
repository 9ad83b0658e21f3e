#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ota/attack.hpp"
#include "ota/channel.hpp"
#include "ota/classifier.hpp"
#include "ota/numerics.hpp"
#include "ota/rng.hpp"
#include "ota/types.hpp"

namespace ota {

/// Inputs (with labels) and channels, paired per index. Either side may be
/// filled by the crafting routine: craft_limited_channel repeats one input,
/// craft_uap_inputs repeats one channel.
struct CraftingSet {
  std::vector<CVec> inputs;
  std::vector<std::size_t> labels;
  std::vector<CVec> channels;

  std::size_t size() const { return inputs.size(); }
  /// Throws ConfigError unless N >= 2 and every vector has length p.
  void validate() const;
};

enum class Pairing {
  Paired,   // input n with channel n
  Crossed,  // every input with every channel
};

struct UapSettings {
  AttackKind inner = AttackKind::MrppNontargeted;
  WhiteBoxSettings white_box;
  bool centered = false;  // subtract the row mean before the SVD
  Pairing pairing = Pairing::Paired;
  std::size_t crossed_channels = 0;  // Crossed only; 0 means N
};

struct UapPerturbation {
  CVec delta;
  AttackKind mode = AttackKind::None;
  AttackKind inner = AttackKind::MrppNontargeted;
  std::size_t rows = 0;      // stack rows used
  std::size_t excluded = 0;  // rows dropped after an inner attack failure
  int sign = 1;
  bool centered = false;
  double p_max = 0.0;
  double sigma1 = 0.0;
  std::string source;  // identifier of the model it was crafted against
};

/// Unit first right-singular vector of the stack, in complex layout.
/// The sign is left as returned by first_right_singular.
CVec principal_direction(const RealMatrix& stack, bool centered, double* sigma1 = nullptr);

/// +1 or -1: the sign of v1 giving the larger mean true-label loss at
/// inputs[n] + channels[n] .* (sign sqrt(p_max) v1). Ties resolve to +1.
int choose_sign(std::span<const cdouble> v1, const CraftingSet& set, const ClassifierModel& model,
                const PowerBudget& budget);

/// Runs the inner white-box attack on every (input, channel) pair and reduces the
/// stack to its principal direction. Rows whose inner attack throws are excluded.
UapPerturbation craft_from_set(const ClassifierModel& model, const CraftingSet& set, const PowerBudget& budget,
                               const UapSettings& settings, AttackKind mode);

/// UAP over N channel draws for one known input.
UapPerturbation craft_limited_channel(const ClassifierModel& model, std::span<const cdouble> r_t,
                                      std::size_t true_label, const ChannelModelParams& channel, std::size_t n,
                                      const PowerBudget& budget, Rng& rng, const UapSettings& settings = {});

/// UAP from N pre-collected inputs through a known channel h.
UapPerturbation craft_uap_inputs(const ClassifierModel& model, const std::vector<CVec>& inputs,
                                 const std::vector<std::size_t>& labels, std::span<const cdouble> h,
                                 const PowerBudget& budget, const UapSettings& settings = {});

/// UAP from N pre-collected inputs paired with channels drawn from the distribution.
UapPerturbation craft_uap_limited(const ClassifierModel& model, const std::vector<CVec>& inputs,
                                  const std::vector<std::size_t>& labels, const ChannelModelParams& channel,
                                  const PowerBudget& budget, Rng& rng, const UapSettings& settings = {});

/// craft_uap_limited against a substitute model.
UapPerturbation blackbox_uap(const ClassifierModel& substitute, const std::vector<CVec>& inputs,
                             const std::vector<std::size_t>& labels, const ChannelModelParams& channel,
                             const PowerBudget& budget, Rng& rng, const UapSettings& settings = {});

/// Short identifier of a model's weights (FNV-1a over the float32 parameters).
std::string model_fingerprint(const ClassifierModel& model);

std::string uap_to_json(const UapPerturbation& u);
void save_uap(const UapPerturbation& u, const std::filesystem::path& path);
UapPerturbation load_uap(const std::filesystem::path& path);

}  // namespace ota
