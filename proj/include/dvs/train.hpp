#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvs/distill.hpp"
#include "dvs/model.hpp"
#include "dvs/spectral.hpp"
#include "dvs/synth.hpp"

namespace dvs::train {

enum class Paradigm { st, ss, cd };

std::string to_string(Paradigm p);
Paradigm parse_paradigm(const std::string& name);

struct TrainConfig {
  Paradigm paradigm = Paradigm::cd;
  double alpha = 0.5;
  int depth = 3;
  double lr = 0.01;
  int batch = 8;
  int epochs = 40;
  int patience = 5;
  double factor = 0.5;
  std::uint64_t seed = 7;
  spectral::TargetMode target = spectral::TargetMode::dft2ch;

  // Alpha actually used by the objective: ST and SS always train on CE only.
  double effective_alpha() const { return paradigm == Paradigm::cd ? alpha : 0.0; }
  void validate() const;
};

// Model-ready inputs for one paradigm: standardized samples (ST, CD) or
// spatial-spectral magnitudes of the standardized samples (SS), plus cached
// spectral targets for CD.
struct PreparedSet {
  Paradigm paradigm = Paradigm::st;
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  std::vector<Tensor> targets;  // CD only

  std::size_t size() const { return inputs.size(); }
  Shape input_shape() const { return inputs.empty() ? Shape{} : inputs.front().shape(); }
};

// Model input for one raw sample under `paradigm`.
Tensor prepare_input(const Tensor& raw, Paradigm paradigm);

PreparedSet prepare(const synth::Dataset& data, const std::vector<std::size_t>& indices, Paradigm paradigm,
                    spectral::TargetMode target = spectral::TargetMode::dft2ch);
PreparedSet prepare(const synth::Dataset& data, Paradigm paradigm,
                    spectral::TargetMode target = spectral::TargetMode::dft2ch);

struct Metrics {
  int classes = 3;
  std::size_t total = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
  std::vector<std::vector<std::size_t>> confusion;  // rows true, columns predicted
  std::vector<double> precision;
  std::vector<double> recall;
};

// Builds a Metrics record from (true, predicted) pairs; `loss` is left as is.
Metrics tally(const std::vector<int>& truth, const std::vector<int>& predicted, int classes);

Metrics evaluate(const nn::Model& model, const PreparedSet& data);
Metrics evaluate(const nn::Model& model, const synth::Dataset& data, Paradigm paradigm);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double spectral = 0.0;
  double ce = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  nn::Model model;  // best validation-accuracy checkpoint
  Regressor<float> regressor;
  int best_epoch = -1;
  Metrics best_val;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const PreparedSet& train_set, const PreparedSet& val_set,
                  const EpochCallback& on_epoch = {});

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Stratified k-fold: each class is shuffled with the seed and dealt
// round-robin, so per-class fold sizes differ by at most one.
std::vector<Fold> kfold_split(const std::vector<int>& labels, int k, std::uint64_t seed);
std::vector<Fold> kfold_split(const synth::Dataset& data, int k, std::uint64_t seed);

struct GridRow {
  int depth = 0;
  double alpha = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  int best_epoch = -1;
};

struct GridSpec {
  std::vector<int> depths{1, 2, 3, 4, 5};
  std::vector<double> alphas{0.3, 0.5, 0.7};
};

// Trains one CD model per (depth, alpha) on `train_set`, selecting on
// `val_set` and scoring on the shifted-site `test_set`.
std::vector<GridRow> grid_search(const TrainConfig& base, const GridSpec& grid, const PreparedSet& train_set,
                                 const PreparedSet& val_set, const PreparedSet& test_set,
                                 const std::function<void(const GridRow&)>& on_row = {});

}  // namespace dvs::train
