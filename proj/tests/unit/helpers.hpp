#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <filesystem>
#include <string>

#include "ota/classifier.hpp"
#include "ota/rng.hpp"
#include "ota/signal.hpp"

namespace testing {

inline ota::CVec random_cvec(std::size_t p, ota::Rng& rng, double var = 1.0) {
  ota::CVec v(p);
  for (auto& z : v) z = rng.complex_normal(var);
  return v;
}

// Small 3-class model trained once per process.
inline const ota::ClassifierModel& toy_model() {
  static const ota::ClassifierModel model = [] {
    ota::GenerationSpec g;
    g.classes = {ota::ModulationType::BPSK, ota::ModulationType::QPSK, ota::ModulationType::CPFSK};
    g.p = 64;
    g.per_class = 120;
    g.seed = 3;
    const ota::Dataset ds = ota::build_dataset(g);
    ota::ArchitectureSpec a;
    a.p = 64;
    a.classes = g.classes;
    a.conv = {{4, 5}};
    a.dense = {16};
    a.seed = 5;
    ota::ClassifierModel m(a);
    ota::TrainConfig t;
    t.epochs = 6;
    t.optimizer = ota::Optimizer::Adam;
    t.learning_rate = 0.005;
    ota::train(m, ds, t);
    return m;
  }();
  return model;
}

// Noise-free input of class `c` of the toy model.
inline ota::CVec toy_input(std::size_t c, std::uint64_t seed) {
  ota::Rng rng(seed);
  return ota::synth_sample(toy_model().spec().classes.at(c), ota::kNoiseless, 64, rng).iq;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ota_test_" + std::to_string(std::random_device{}()) + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

}  // namespace testing
