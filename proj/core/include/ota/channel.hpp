#pragma once

#include <optional>
#include <span>

#include "ota/rng.hpp"
#include "ota/types.hpp"

namespace ota {

enum class Fading { Rayleigh, None };

/// How the shadowing draw X ~ N(0, sigma^2) maps to the amplitude factor psi.
enum class Shadowing {
  Decibel,     // sigma in dB of power: psi = 10^(X/20)
  NaturalLog,  // sigma in nepers of amplitude: psi = exp(X)
};

/// h_i = K (d0/d)^gamma_pl * psi * h_ray,i
struct ChannelModelParams {
  double K = 1.0;
  double d0 = 1.0;
  double d = 10.0;
  double gamma_pl = 2.7;
  double shadow_sigma_db = 8.0;
  Fading fading = Fading::Rayleigh;
  Shadowing shadowing = Shadowing::Decibel;
  bool normalize_gain = true;

  void validate() const;  // throws ConfigError
  double path_loss_amplitude() const;

  /// Identity channel (H = I).
  static ChannelModelParams identity();
  bool operator==(const ChannelModelParams&) const = default;
};

struct ChannelRealization {
  CVec h;  // diagonal of H
  ChannelModelParams params;
  double shadowing = 1.0;  // psi of this draw
};

struct NoiseSpec {
  double sigma2 = 0.1;  // per complex element
  void validate() const;
  static NoiseSpec from_snr_db(double snr_db);
};

/// psi is drawn once per realization, h_ray per tap.
ChannelRealization sample_channel(const ChannelModelParams& params, std::size_t p, Rng& rng);

/// Elementwise h_i * v_i. Throws ShapeError on length mismatch.
CVec apply_channel(std::span<const cdouble> h, std::span<const cdouble> v);

/// r = H_tr x (+ H_ar delta) + n with n ~ CN(0, sigma2 I).
CVec receive(std::span<const cdouble> x, std::optional<std::span<const cdouble>> delta, std::span<const cdouble> h_tr,
             std::span<const cdouble> h_ar, const NoiseSpec& noise, Rng& rng);

/// Noise-free received signal, used by the adversary while crafting.
CVec receive_noiseless(std::span<const cdouble> x, std::optional<std::span<const cdouble>> delta,
                       std::span<const cdouble> h_tr, std::span<const cdouble> h_ar);

/// Monte-Carlo estimate of E[(1/p) sum |h_i|^2] with a fixed sub-seed; cached per parameter set.
double mean_channel_gain(const ChannelModelParams& params, std::size_t p = 128, std::size_t draws = 10000);

}  // namespace ota
