#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ota/signal.hpp"
#include "ota/types.hpp"

namespace ota {

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t width = 0;  // odd; zero "same" padding keeps the length at p
  bool operator==(const ConvLayerSpec&) const = default;
};

/// Fixed-architecture network over the 2p-real I/Q input:
/// conv1d(+ReLU)* -> flatten -> dense(+ReLU)* -> dense(C) -> softmax.
struct ArchitectureSpec {
  std::size_t p = kDefaultLength;
  std::vector<ModulationType> classes{kDigitalModulations.begin(), kDigitalModulations.end()};
  std::vector<ConvLayerSpec> conv{{16, 5}, {8, 3}};
  std::vector<std::size_t> dense{64};
  std::uint64_t seed = 1;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t input_size() const { return 2 * p; }
  void validate() const;  // throws ConfigError
  bool operator==(const ArchitectureSpec&) const = default;
};

/// One-hot label y in {0,1}^C.
class LabelVector {
 public:
  static LabelVector one_hot(std::size_t index, std::size_t classes);
  /// Throws ConfigError unless exactly one entry equals 1 and the rest 0.
  static LabelVector from_vector(std::span<const double> y);

  std::size_t index() const { return index_; }
  std::size_t size() const { return size_; }
  RVec dense() const;

 private:
  LabelVector(std::size_t i, std::size_t n) : index_(i), size_(n) {}
  std::size_t index_;
  std::size_t size_;
};

struct TrainingMetadata {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string optimizer;
  double learning_rate = 0.0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

class ClassifierModel {
 public:
  struct LayerView {
    std::span<double> weights;
    std::span<double> bias;
  };

  /// Weights drawn uniformly with a fan-in scaled bound from spec.seed, then
  /// rounded to float32 so that the model file round trip is exact.
  explicit ClassifierModel(ArchitectureSpec spec);

  const ArchitectureSpec& spec() const { return spec_; }
  std::size_t num_classes() const { return spec_.num_classes(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t num_layers() const { return layers_.size(); }
  LayerView layer(std::size_t i);

  std::optional<std::size_t> class_index(ModulationType m) const;

  RVec logits(std::span<const double> x) const;
  RVec probabilities(std::span<const double> x) const;
  double loss(std::span<const double> x, std::size_t label) const;

  /// dL/dx for cross-entropy L at label; optionally reports L.
  RVec input_gradient(std::span<const double> x, std::size_t label, double* loss_out = nullptr) const;

  /// Adds dL/dtheta into grad (length parameter_count()); returns L and
  /// sets *correct when the prediction matches label.
  double accumulate_parameter_gradient(std::span<const double> x, std::size_t label, std::span<double> grad,
                                       bool* correct = nullptr) const;

  /// Rounds every parameter to the nearest float32 value.
  void round_to_f32();

  TrainingMetadata meta;

  bool operator==(const ClassifierModel& o) const { return spec_ == o.spec_ && params_ == o.params_; }

 private:
  struct Layer {
    bool conv = false;
    bool relu = true;
    std::size_t in_ch = 0, out_ch = 0, width = 0, length = 0;  // conv
    std::size_t in = 0, out = 0;                                // flattened sizes
    std::size_t w_off = 0, b_off = 0;
  };
  struct Trace {
    std::vector<RVec> act;  // act[0] = input, act[l+1] = output of layer l (post-ReLU)
  };

  void run_forward(std::span<const double> x, Trace& t) const;
  // Back-propagates dL/dlogits; fills parameter gradient (if non-empty) and returns dL/dx if wanted.
  RVec run_backward(const Trace& t, RVec delta, std::span<double> grad, bool want_input) const;
  void check_input(std::span<const double> x) const;

  ArchitectureSpec spec_;
  std::vector<Layer> layers_;
  RVec params_;
};

// Free-function surface over complex I/Q inputs.
RVec forward(const ClassifierModel& model, std::span<const cdouble> x);
std::size_t predict_index(const ClassifierModel& model, std::span<const cdouble> x);
ModulationType predict(const ClassifierModel& model, std::span<const cdouble> x);
double loss(const ClassifierModel& model, std::span<const cdouble> x, const LabelVector& y);
/// Real gradient of length 2p (I then Q) of the loss w.r.t. the input.
RVec input_gradient(const ClassifierModel& model, std::span<const cdouble> x, const LabelVector& y);

/// Argmax with ties broken toward the lowest index.
std::size_t argmax(std::span<const double> v);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::Sgd;
  double momentum = 0.0;  // SGD only
  std::function<void(std::size_t epoch, double mean_loss, double train_acc)> on_epoch;
};

struct TrainingReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Mini-batch training on the Train split; reports accuracy on both splits.
/// Deterministic for a fixed seed. Throws TrainingError on a non-finite loss
/// and ShapeError if the dataset classes differ from the model's.
TrainingReport train(ClassifierModel& model, const Dataset& ds, const TrainConfig& cfg);

/// Accuracy on the whole dataset or one split. Throws ShapeError when a label is
/// not one of the model's classes or the sample length differs from p.
double evaluate(const ClassifierModel& model, const Dataset& ds, std::optional<Split> split = std::nullopt);

/// JSON architecture header + float32 weight payload.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace ota
