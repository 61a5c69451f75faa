#pragma once

#include "qtaccel/dataset.hpp"
#include "qtaccel/features.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qtaccel {

template <class T>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> w; // in x out, input-major
  std::vector<T> b;
};

/// Fully connected network: rectifier on hidden layers, identity on the output layer.
template <class T>
struct Network {
  std::vector<DenseLayer<T>> layers;

  /// widths = {input, hidden..., output}; every parameter zero.
  static Network zeros(const std::vector<int>& widths);
  /// He initialisation: w ~ N(0, 2 / fan_in), b = 0.
  static Network he(const std::vector<int>& widths, std::uint64_t seed);

  std::vector<int> widths() const;
  std::size_t input_width() const { return layers.front().in; }
  std::size_t output_width() const { return layers.back().out; }
  std::size_t parameter_count() const;

  /// Row-per-sample batch; returns rows x output_width.
  std::vector<T> forward(std::span<const T> x, std::size_t rows, int jobs = 1) const;

  template <class U>
  Network<U> cast() const {
    Network<U> n;
    for (const auto& l : layers)
      n.layers.push_back({l.in, l.out, std::vector<U>(l.w.begin(), l.w.end()), std::vector<U>(l.b.begin(), l.b.end())});
    return n;
  }

  /// Visits every parameter in storage order (per layer: weights, then biases).
  template <class F>
  void for_each_parameter(F&& f) {
    for (auto& l : layers) {
      for (auto& v : l.w)
        f(v);
      for (auto& v : l.b)
        f(v);
    }
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    for (const auto& l : layers) {
      for (const auto& v : l.w)
        f(v);
      for (const auto& v : l.b)
        f(v);
    }
  }
};

template <class T>
struct LossAndGrads {
  double loss = 0.0;
  Network<T> grads;
};

/// Mean squared error over the batch and output columns, with gradients.
/// If `select` is nonempty (rows x out, 0/1), only selected outputs enter the loss and its mean.
template <class T>
LossAndGrads<T> loss_and_grads(const Network<T>& net, std::span<const T> x, std::span<const T> y, std::size_t rows,
                               int jobs = 1, std::span<const std::uint8_t> select = {});

struct AdamHyper {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  Network<T> m;
  Network<T> v;
  std::int64_t step = 0;
  AdamHyper hyper;

  static AdamState for_network(const Network<T>& net, AdamHyper hyper);
};

template <class T>
void adam_step(Network<T>& net, const Network<T>& grads, AdamState<T>& state);

/// Largest spectral norm over the layers' weight matrices (power iteration).
template <class T>
double max_layer_gain(const Network<T>& net);

inline constexpr double kMaxLayerGain = 1e3;

/// Network plus the metadata needed to use it on feature vectors.
struct MlpModel {
  std::string variant;
  Network<float> net;
  NormalizationSpec norm;
  std::uint64_t layout_hash = 0;
  std::uint64_t seed = 0;
  FeatureMask mask;

  int out() const { return static_cast<int>(net.output_width()); }
};

inline const std::vector<int> kDefaultHidden{256, 256, 128};
inline const std::vector<int> kReducedHidden{128, 128, 64};

/// Feature-sized model: kFeatureCount -> hidden... -> out, He-initialised.
MlpModel init_model(const std::vector<int>& hidden, int out, std::uint64_t seed);

/// Throws ModelError if the model was built for a different feature layout.
void check_layout(const MlpModel& model);

/// Applies the model's mask and runs the network; returns rows x out.
std::vector<float> predict(const MlpModel& model, std::span<const FeatureVector> features, int jobs = 1);

void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

/// CU sizes a regression variant (N8, N16, N32, N32_16, N32_16_8) is trained on.
std::vector<int> variant_sizes(const std::string& variant);

struct RegressionHyper {
  int epochs = 10;
  int batch = 512;
  AdamHyper adam;
  std::vector<int> hidden = kDefaultHidden;
  FeatureMask mask;
  std::int64_t max_steps = 0; // 0: no limit
  int jobs = 1;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;
};

/// Single-size variants use ratio targets (out = 1); multi-size variants use median targets (out = 2).
TrainResult train_regression(const std::vector<CuRecord>& records, const std::string& variant,
                             const RegressionHyper& hyper, std::uint64_t seed);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss);

/// Rows of (features with mask applied, targets) flattened for the network.
struct FlatBatch {
  std::vector<float> x;
  std::vector<float> y;
};
FlatBatch flatten(const TrainingSet& set, const FeatureMask& mask);

} // namespace qtaccel
