#include "ota/channel.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "ota/error.hpp"

namespace ota {

void ChannelModelParams::validate() const {
  if (!(d > 0.0)) throw ConfigError("channel: d must be positive");
  if (!(d0 > 0.0)) throw ConfigError("channel: d0 must be positive");
  if (!(gamma_pl >= 0.0)) throw ConfigError("channel: path-loss exponent must be non-negative");
  if (!(shadow_sigma_db >= 0.0)) throw ConfigError("channel: shadowing sigma must be non-negative");
  if (!std::isfinite(K)) throw ConfigError("channel: K must be finite");
}

double ChannelModelParams::path_loss_amplitude() const { return K * std::pow(d0 / d, gamma_pl); }

ChannelModelParams ChannelModelParams::identity() {
  ChannelModelParams p;
  p.d = p.d0 = 1.0;
  p.shadow_sigma_db = 0.0;
  p.fading = Fading::None;
  p.normalize_gain = false;
  return p;
}

void NoiseSpec::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("noise variance must be positive and finite");
}

NoiseSpec NoiseSpec::from_snr_db(double snr_db) { return {std::pow(10.0, -snr_db / 10.0)}; }

ChannelRealization sample_channel(const ChannelModelParams& params, std::size_t p, Rng& rng) {
  params.validate();
  ChannelRealization r;
  r.params = params;
  const double x = params.shadow_sigma_db > 0.0 ? params.shadow_sigma_db * rng.normal() : 0.0;
  r.shadowing = params.shadowing == Shadowing::Decibel ? std::pow(10.0, x / 20.0) : std::exp(x);
  const double scale = params.path_loss_amplitude() * r.shadowing;
  r.h.resize(p);
  for (auto& h : r.h) h = scale * (params.fading == Fading::Rayleigh ? rng.complex_normal(1.0) : cdouble(1.0, 0.0));
  if (params.normalize_gain) {
    const double pw = mean_power(r.h);
    if (pw > 0.0) {
      const double g = 1.0 / std::sqrt(pw);
      for (auto& h : r.h) h *= g;
    }
  }
  return r;
}

CVec apply_channel(std::span<const cdouble> h, std::span<const cdouble> v) {
  if (h.size() != v.size())
    throw ShapeError("apply_channel: channel length " + std::to_string(h.size()) + " != signal length " +
                     std::to_string(v.size()));
  CVec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = h[i] * v[i];
  return out;
}

CVec receive_noiseless(std::span<const cdouble> x, std::optional<std::span<const cdouble>> delta,
                       std::span<const cdouble> h_tr, std::span<const cdouble> h_ar) {
  CVec r = apply_channel(h_tr, x);
  if (delta) {
    if (h_ar.size() != r.size() || delta->size() != r.size()) throw ShapeError("receive: perturbation length mismatch");
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += h_ar[i] * (*delta)[i];
  }
  return r;
}

CVec receive(std::span<const cdouble> x, std::optional<std::span<const cdouble>> delta, std::span<const cdouble> h_tr,
             std::span<const cdouble> h_ar, const NoiseSpec& noise, Rng& rng) {
  noise.validate();
  CVec r = receive_noiseless(x, delta, h_tr, h_ar);
  for (auto& z : r) z += rng.complex_normal(noise.sigma2);
  return r;
}

double mean_channel_gain(const ChannelModelParams& params, std::size_t p, std::size_t draws) {
  using Key = std::tuple<double, double, double, double, double, int, int, bool, std::size_t, std::size_t>;
  static std::mutex mu;
  static std::map<Key, double> cache;
  const Key key{params.K,
                params.d0,
                params.d,
                params.gamma_pl,
                params.shadow_sigma_db,
                static_cast<int>(params.fading),
                static_cast<int>(params.shadowing),
                params.normalize_gain,
                p,
                draws};
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  Rng rng(0x5EED, Stream::GainEstimate);
  double acc = 0.0;
  for (std::size_t k = 0; k < draws; ++k) acc += mean_power(sample_channel(params, p, rng).h);
  const double gain = acc / static_cast<double>(draws);
  std::lock_guard lock(mu);
  cache[key] = gain;
  return gain;
}

}  // namespace ota
