#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ota/rng.hpp"
#include "ota/types.hpp"

namespace ota {

enum class ModulationType { BPSK, QPSK, PSK8, QAM16, QAM64, PAM4, CPFSK, GFSK, WBFM, AMSSB, AMDSB };

inline constexpr std::array<ModulationType, 11> kAllModulations = {
    ModulationType::BPSK,  ModulationType::QPSK,  ModulationType::PSK8, ModulationType::QAM16,
    ModulationType::QAM64, ModulationType::PAM4,  ModulationType::CPFSK, ModulationType::GFSK,
    ModulationType::WBFM,  ModulationType::AMSSB, ModulationType::AMDSB};

/// The eight digital classes used by default (analog classes are approximate).
inline constexpr std::array<ModulationType, 8> kDigitalModulations = {
    ModulationType::BPSK,  ModulationType::QPSK, ModulationType::PSK8,  ModulationType::QAM16,
    ModulationType::QAM64, ModulationType::PAM4, ModulationType::CPFSK, ModulationType::GFSK};

std::string_view to_string(ModulationType m);
ModulationType parse_modulation(std::string_view name);  // throws ConfigError
bool is_linear(ModulationType m);   // symbol-mapped constellation (PSK/QAM/PAM)
bool is_analog(ModulationType m);

/// Unit-average-energy constellation of a linear modulation.
const std::vector<cdouble>& constellation(ModulationType m);

inline constexpr std::size_t kDefaultLength = 128;
inline constexpr std::size_t kDefaultSamplesPerSymbol = 8;
inline constexpr double kRolloff = 0.35;
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

struct IQSample {
  CVec iq;
  ModulationType label = ModulationType::BPSK;
  double snr_db = kNoiseless;

  bool operator==(const IQSample&) const = default;
};

/// Noise-free, unnormalized waveform. For linear modulations `symbols` holds the
/// transmitted symbol sequence; matched_sample(iq) recovers it exactly.
struct Waveform {
  CVec iq;
  CVec symbols;
};

Waveform synthesize_waveform(ModulationType mod, std::size_t p, std::size_t samples_per_symbol, Rng& rng);

/// Synthesizes one labeled, unit-power I/Q vector. snr_db = +inf means noiseless.
/// Throws ConfigError if p is not a multiple of samples_per_symbol or p < 8 * samples_per_symbol.
IQSample synth_sample(ModulationType mod, double snr_db, std::size_t p, Rng& rng,
                      std::size_t samples_per_symbol = kDefaultSamplesPerSymbol);

/// Circular matched filter (the same root-raised-cosine) sampled at symbol instants.
CVec matched_sample(std::span<const cdouble> iq, std::size_t samples_per_symbol = kDefaultSamplesPerSymbol);

/// One period of the circular root-raised-cosine pulse, scaled so that a unit
/// energy symbol stream has unit mean power.
const RVec& rrc_pulse(std::size_t p, std::size_t samples_per_symbol);

/// Scales v in place to unit mean power. Returns the applied gain.
double normalize_power(CVec& v);

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct GenerationSpec {
  std::vector<ModulationType> classes{kDigitalModulations.begin(), kDigitalModulations.end()};
  std::vector<double> snr_grid{10.0};
  std::size_t per_class = 100;  // per class per SNR point
  std::size_t p = kDefaultLength;
  std::size_t samples_per_symbol = kDefaultSamplesPerSymbol;
  std::uint64_t seed = 1;
  double test_fraction = 0.2;

  bool operator==(const GenerationSpec&) const = default;
};

struct Dataset {
  GenerationSpec spec;
  std::vector<IQSample> samples;
  std::vector<Split> split;

  std::size_t size() const { return samples.size(); }
  std::size_t count(Split s) const;
  bool operator==(const Dataset&) const = default;
};

/// Balanced dataset ordered by (SNR, class, index). Sample j draws from
/// Rng(seed, Stream::Synth, j); the split is a seeded shuffle inside each
/// (SNR, class) group.
Dataset build_dataset(const GenerationSpec& spec);

/// JSON header + little-endian float32 interleaved I/Q payload.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Rounds every I/Q component to float32, i.e. what a save/load round trip yields.
Dataset quantize_f32(Dataset ds);

}  // namespace ota
