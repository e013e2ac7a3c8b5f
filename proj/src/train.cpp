#include "dvs/train.hpp"

#include <algorithm>
#include <cmath>

#include "dvs/optim.hpp"
#include "dvs/random.hpp"

namespace dvs::train {

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::st: return "st";
    case Paradigm::ss: return "ss";
    case Paradigm::cd: return "cd";
  }
  return "?";
}

Paradigm parse_paradigm(const std::string& name) {
  if (name == "st" || name == "ST") return Paradigm::st;
  if (name == "ss" || name == "SS") return Paradigm::ss;
  if (name == "cd" || name == "CD") return Paradigm::cd;
  throw ValueError("unknown paradigm '" + name + "' (expected st, ss or cd)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (depth < 1 || depth > 5) throw ConfigError("depth must lie in [1, 5], got " + std::to_string(depth));
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("lr factor must lie in (0, 1]");
}

Tensor prepare_input(const Tensor& raw, Paradigm paradigm) {
  const Tensor z = synth::standardize(raw);
  const std::size_t t = z.rank() == 3 ? z.dim(1) : z.dim(0);
  const std::size_t s = z.rank() == 3 ? z.dim(2) : z.dim(1);
  if (paradigm == Paradigm::ss) return synth::standardize(spectral::ss_transform(z));
  return z.reshaped(Shape{1, t, s});
}

PreparedSet prepare(const synth::Dataset& data, const std::vector<std::size_t>& indices, Paradigm paradigm,
                    spectral::TargetMode target) {
  PreparedSet out;
  out.paradigm = paradigm;
  out.inputs.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    const synth::Sample& s = data.samples.at(i);
    out.inputs.push_back(prepare_input(s.values, paradigm));
    out.labels.push_back(s.label);
    if (paradigm == Paradigm::cd) out.targets.push_back(spectral::spectral_target(out.inputs.back(), target).tensor);
  }
  return out;
}

PreparedSet prepare(const synth::Dataset& data, Paradigm paradigm, spectral::TargetMode target) {
  std::vector<std::size_t> all(data.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return prepare(data, all, paradigm, target);
}

Metrics tally(const std::vector<int>& truth, const std::vector<int>& predicted, int classes) {
  if (truth.size() != predicted.size()) throw ShapeError("tally: label and prediction counts differ");
  Metrics m;
  m.classes = classes;
  m.total = truth.size();
  const auto k = static_cast<std::size_t>(classes);
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.confusion.at(static_cast<std::size_t>(truth[i])).at(static_cast<std::size_t>(predicted[i]))++;
  }
  std::size_t correct = 0;
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    correct += m.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m.confusion[c][j];
      col += m.confusion[j][c];
    }
    m.recall[c] = row ? static_cast<double>(m.confusion[c][c]) / static_cast<double>(row) : 0.0;
    m.precision[c] = col ? static_cast<double>(m.confusion[c][c]) / static_cast<double>(col) : 0.0;
  }
  m.accuracy = m.total ? static_cast<double>(correct) / static_cast<double>(m.total) : 0.0;
  return m;
}

Metrics evaluate(const nn::Model& model, const PreparedSet& data) {
  if (data.size() == 0) throw ValueError("evaluate: empty dataset");
  require_shape(data.input_shape(), model.input, "evaluate input");
  std::vector<int> predicted(data.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor logits = nn::model_forward(model, data.inputs[i]).logits;
    const auto best = std::max_element(logits.data().begin(), logits.data().end());
    predicted[i] = static_cast<int>(best - logits.data().begin());
    loss += nn::softmax_ce(logits.data(), data.labels[i]).loss;
  }
  Metrics m = tally(data.labels, predicted, model.classes);
  m.loss = loss / static_cast<double>(data.size());
  return m;
}

Metrics evaluate(const nn::Model& model, const synth::Dataset& data, Paradigm paradigm) {
  return evaluate(model, prepare(data, paradigm == Paradigm::ss ? Paradigm::ss : Paradigm::st));
}

namespace {

struct ParamRefs {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
};

ParamRefs refs(nn::Model& model, nn::LayerGrads<float>& grads) {
  ParamRefs r;
  for (std::size_t l = 0; l < model.params.size(); ++l) {
    for (std::size_t p = 0; p < model.params[l].size(); ++p) {
      r.params.push_back(&model.params[l][p]);
      r.grads.push_back(&grads[l][p]);
    }
  }
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& config, const PreparedSet& train_set, const PreparedSet& val_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw ValueError("train: empty training or validation set");
  if (train_set.paradigm != val_set.paradigm) throw ValueError("train: training and validation sets use different paradigms");
  const double alpha = config.effective_alpha();
  const bool spectral = alpha > 0.0;
  if (spectral && train_set.targets.size() != train_set.size()) {
    throw ValueError("train: alpha > 0 requires precomputed spectral targets");
  }

  nn::Model model = nn::model_build(config.depth, synth::kClasses, derive_seed(config.seed, 1), train_set.input_shape());
  const std::size_t hint_ch = model.params[model.hint_layer][2].dim(1);
  Regressor<float> regressor;
  if (spectral) {
    regressor = make_regressor(hint_ch, spectral::target_channels(config.target), derive_seed(config.seed, 2));
  }

  Adam model_opt;
  Adam reg_opt;
  PlateauSchedule schedule;
  schedule.lr = config.lr;
  schedule.patience = config.patience;
  schedule.factor = config.factor;
  Rng order_rng(derive_seed(config.seed, 3));

  TrainResult result;
  result.model = model;
  result.regressor = regressor;
  double best_acc = -1.0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const Objective<float> objective{alpha, spectral ? &regressor : nullptr};
  std::vector<BatchItem<float>> batch;
  batch.reserve(static_cast<std::size_t>(config.batch));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = schedule.lr;
    order_rng.shuffle(order.begin(), order.end());
    double sum_loss = 0.0, sum_spec = 0.0, sum_ce = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      batch.clear();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        batch.push_back({&train_set.inputs[i], train_set.labels[i], spectral ? &train_set.targets[i] : nullptr});
      }
      BackwardResult<float> br = model_backward<float>(model, batch, objective);
      const double n = static_cast<double>(batch.size());
      sum_loss += br.terms.loss * n;
      sum_spec += br.terms.spectral * n;
      sum_ce += br.terms.ce * n;
      seen += batch.size();

      ParamRefs r = refs(model, br.grads.layers);
      model_opt.step(r.params, r.grads, lr);
      if (spectral) {
        Tensor* rp[] = {&regressor.weight, &regressor.bias};
        const Tensor* rg[] = {&br.grads.regressor.weight, &br.grads.regressor.bias};
        reg_opt.step(rp, rg, lr);
      }
    }

    const Metrics val = evaluate(model, val_set);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = sum_loss / static_cast<double>(seen);
    rec.spectral = sum_spec / static_cast<double>(seen);
    rec.ce = sum_ce / static_cast<double>(seen);
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    result.history.push_back(rec);
    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      result.model = model;
      result.regressor = regressor;
      result.best_epoch = epoch;
      result.best_val = val;
    }
    schedule.update(val.loss);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::vector<Fold> kfold_split(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ValueError("kfold_split: k must be >= 2");
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw ValueError("kfold_split: negative label");
    classes = std::max(classes, l + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  const auto nk = static_cast<std::size_t>(k);
  std::vector<std::size_t> fold_of(labels.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < nk) {
      throw ValueError("kfold_split: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                       " samples, fewer than k = " + std::to_string(k));
    }
    Rng rng(derive_seed(seed, 0x6B66ULL, c));
    rng.shuffle(idx.begin(), idx.end());
    // Rotate the dealing start per class so remainders spread over folds.
    std::size_t offset = 0;
    for (std::size_t prev = 0; prev < c; ++prev) offset += by_class[prev].size();
    for (std::size_t j = 0; j < idx.size(); ++j) fold_of[idx[j]] = (j + offset) % nk;
  }

  std::vector<Fold> folds(nk);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < nk; ++f) (f == fold_of[i] ? folds[f].val : folds[f].train).push_back(i);
  }
  return folds;
}

std::vector<Fold> kfold_split(const synth::Dataset& data, int k, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(data.samples.size());
  for (const auto& s : data.samples) labels.push_back(s.label);
  return kfold_split(labels, k, seed);
}

std::vector<GridRow> grid_search(const TrainConfig& base, const GridSpec& grid, const PreparedSet& train_set,
                                 const PreparedSet& val_set, const PreparedSet& test_set,
                                 const std::function<void(const GridRow&)>& on_row) {
  std::vector<GridRow> rows;
  for (int depth : grid.depths) {
    for (double alpha : grid.alphas) {
      TrainConfig cfg = base;
      cfg.paradigm = Paradigm::cd;
      cfg.depth = depth;
      cfg.alpha = alpha;
      const TrainResult r = train(cfg, train_set, val_set);
      GridRow row;
      row.depth = depth;
      row.alpha = alpha;
      row.val_acc = r.best_val.accuracy;
      row.test_acc = evaluate(r.model, test_set).accuracy;
      row.best_epoch = r.best_epoch;
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return rows;
}

}  // namespace dvs::train
