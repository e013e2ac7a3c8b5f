// dvs: command-line entry point for generation, training, evaluation,
// quantization, benchmarking, range arithmetic and reports.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dvs/checkpoint.hpp"
#include "dvs/dataset_io.hpp"
#include "dvs/model.hpp"
#include "dvs/quant.hpp"
#include "dvs/stream.hpp"
#include "dvs/synth.hpp"
#include "dvs/train.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dvs;

namespace {

// ---------------------------------------------------------------------------
// configuration

json default_config() {
  const train::TrainConfig t;
  const synth::DatasetSpec d;
  json c;
  c["seed"] = 7;
  c["out"] = "run";
  c["data"] = "";  // directory holding site_a.dvs1 / site_b.dvs1; empty = out
  c["gen"] = {{"counts_a", d.counts_a}, {"counts_b", d.counts_b}};
  c["train"] = {{"paradigm", train::to_string(t.paradigm)},
                {"alpha", t.alpha},
                {"depth", t.depth},
                {"lr", t.lr},
                {"batch", t.batch},
                {"epochs", t.epochs},
                {"patience", t.patience},
                {"factor", t.factor},
                {"target", spectral::to_string(t.target)},
                {"split_folds", 5},
                {"fold", 0}};
  c["grid"] = {{"depths", {1, 2, 3, 4, 5}}, {"alphas", {0.3, 0.5, 0.7}}};
  c["quantize"] = {{"calibration", 256}, {"holdout", 1000}, {"equalize", true}, {"equalize_passes", 2}};
  c["bench"] = {{"engine", "float"}, {"workers", 1}, {"samples", 1000}, {"warmup", 10}};
  return c;
}

bool same_kind(const json& want, const json& got) {
  if (want.is_number_integer()) return got.is_number_integer();
  if (want.is_number()) return got.is_number();
  return want.type() == got.type();
}

void merge_checked(json& base, const json& in, const std::string& path) {
  if (!in.is_object()) throw ConfigError("config " + (path.empty() ? std::string("root") : path) + " must be an object");
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// output helpers

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path prepare_out(const json& cfg) {
  const fs::path out = cfg["out"].get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  write_text(out / "config.json", cfg.dump(2) + "\n");
  return out;
}

fs::path data_dir(const json& cfg) {
  const std::string d = cfg["data"].get<std::string>();
  return d.empty() ? fs::path(cfg["out"].get<std::string>()) : fs::path(d);
}

std::string num(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json metrics_json(const train::Metrics& m) {
  json j;
  std::vector<std::string> names(synth::class_names().begin(), synth::class_names().end());
  j["classes"] = names;
  j["total"] = m.total;
  j["accuracy"] = m.accuracy;
  j["loss"] = m.loss;
  j["confusion"] = m.confusion;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  return j;
}

std::string history_csv(const std::vector<train::EpochRecord>& h) {
  std::string out = "epoch,lr,train_loss,spectral,ce,val_loss,val_acc\n";
  for (const auto& e : h) {
    out += std::to_string(e.epoch) + "," + num(e.lr, "%.9g") + "," + num(e.train_loss, "%.9g") + "," +
           num(e.spectral, "%.9g") + "," + num(e.ce, "%.9g") + "," + num(e.val_loss, "%.9g") + "," +
           num(e.val_acc, "%.9g") + "\n";
  }
  return out;
}

train::TrainConfig train_config(const json& cfg) {
  const json& t = cfg["train"];
  train::TrainConfig c;
  c.paradigm = train::parse_paradigm(t["paradigm"].get<std::string>());
  c.alpha = t["alpha"].get<double>();
  c.depth = t["depth"].get<int>();
  c.lr = t["lr"].get<double>();
  c.batch = t["batch"].get<int>();
  c.epochs = t["epochs"].get<int>();
  c.patience = t["patience"].get<int>();
  c.factor = t["factor"].get<double>();
  c.target = spectral::parse_target_mode(t["target"].get<std::string>());
  c.seed = cfg["seed"].get<std::uint64_t>();
  c.validate();
  return c;
}

train::Paradigm input_paradigm(train::Paradigm p) { return p == train::Paradigm::ss ? p : train::Paradigm::st; }

void log_epoch(const train::EpochRecord& e, int epochs) {
  std::fprintf(stderr, "  epoch %d/%d  lr %.3g  loss %.4f  val_loss %.4f  val_acc %.4f\n", e.epoch, epochs, e.lr,
               e.train_loss, e.val_loss, e.val_acc);
}

// ---------------------------------------------------------------------------
// commands

int cmd_gen(const json& cfg) {
  synth::DatasetSpec spec;
  spec.seed = cfg["seed"].get<std::uint64_t>();
  spec.counts_a = cfg["gen"]["counts_a"].get<std::array<int, synth::kClasses>>();
  spec.counts_b = cfg["gen"]["counts_b"].get<std::array<int, synth::kClasses>>();
  for (int c = 0; c < synth::kClasses; ++c) {
    if (spec.counts_a[c] < 0 || spec.counts_b[c] < 0) throw ValueError("gen: counts must be non-negative");
  }
  const fs::path out = prepare_out(cfg);
  const auto files = synth::gen_dataset(spec, out.string());
  std::printf("site A: %zu samples -> %s\n", files.site_a_count, files.site_a_path.c_str());
  std::printf("site B: %zu samples -> %s\n", files.site_b_count, files.site_b_path.c_str());
  for (int c = 0; c < synth::kClasses; ++c) {
    std::printf("  %-10s A %5d  B %5d\n", synth::class_names()[c].c_str(), spec.counts_a[c], spec.counts_b[c]);
  }
  std::printf("manifest: %s\n", files.manifest_path.c_str());
  return 0;
}

struct Sites {
  synth::Dataset a, b;
};

Sites load_sites(const json& cfg) {
  const fs::path d = data_dir(cfg);
  Sites s{io::load_dataset((d / "site_a.dvs1").string()), io::load_dataset((d / "site_b.dvs1").string())};
  if (s.a.samples.empty()) throw ValueError("train: site A dataset is empty");
  if (s.b.samples.empty()) throw ValueError("train: site B dataset is empty");
  return s;
}

int cmd_train(const json& cfg, int cv_folds, bool grid) {
  const train::TrainConfig tc = train_config(cfg);
  const Sites sites = load_sites(cfg);
  const fs::path out = prepare_out(cfg);
  const int k = cfg["train"]["split_folds"].get<int>();
  const int fold = cfg["train"]["fold"].get<int>();
  if (k < 2) throw ConfigError("train.split_folds must be at least 2");
  if (fold < 0 || fold >= k) throw ConfigError("train.fold must lie in [0, split_folds)");

  if (grid) {
    const auto folds = train::kfold_split(sites.a, k, tc.seed);
    const auto& f = folds[static_cast<std::size_t>(fold)];
    const auto ts = train::prepare(sites.a, f.train, train::Paradigm::cd, tc.target);
    const auto vs = train::prepare(sites.a, f.val, train::Paradigm::cd, tc.target);
    const auto bs = train::prepare(sites.b, train::Paradigm::st);
    train::GridSpec gs;
    gs.depths = cfg["grid"]["depths"].get<std::vector<int>>();
    gs.alphas = cfg["grid"]["alphas"].get<std::vector<double>>();
    std::string csv = "depth,alpha,val_acc,test_acc,best_epoch\n";
    train::TrainConfig base = tc;
    base.paradigm = train::Paradigm::cd;
    train::grid_search(base, gs, ts, vs, bs, [&](const train::GridRow& r) {
      std::fprintf(stderr, "grid depth %d alpha %.2f: val %.4f test %.4f (best epoch %d)\n", r.depth, r.alpha,
                   r.val_acc, r.test_acc, r.best_epoch);
      csv += std::to_string(r.depth) + "," + num(r.alpha, "%.2f") + "," + num(r.val_acc) + "," + num(r.test_acc) +
             "," + std::to_string(r.best_epoch) + "\n";
      write_text(out / "grid.csv", csv);
    });
    std::printf("grid: %s\n", (out / "grid.csv").string().c_str());
    return 0;
  }

  const int n_folds = cv_folds > 0 ? cv_folds : k;
  if (cv_folds == 1) throw ConfigError("--folds needs at least 2 folds");
  const auto folds = train::kfold_split(sites.a, n_folds, tc.seed);
  const auto bs = train::prepare(sites.b, input_paradigm(tc.paradigm));

  std::vector<int> which;
  if (cv_folds > 0) {
    which.resize(static_cast<std::size_t>(cv_folds));
    std::iota(which.begin(), which.end(), 0);
  } else {
    which = {fold};
  }

  json summary;
  summary["paradigm"] = train::to_string(tc.paradigm);
  summary["alpha"] = tc.effective_alpha();
  summary["depth"] = tc.depth;
  summary["seed"] = tc.seed;
  std::string folds_csv = "fold,best_epoch,val_acc,test_acc\n";
  std::vector<double> vals, tests;
  for (int f : which) {
    const auto& split = folds[static_cast<std::size_t>(f)];
    std::fprintf(stderr, "fold %d: %zu train / %zu val\n", f, split.train.size(), split.val.size());
    const auto ts = train::prepare(sites.a, split.train, tc.paradigm, tc.target);
    const auto vs = train::prepare(sites.a, split.val, tc.paradigm, tc.target);
    const auto result = train::train(tc, ts, vs, [&](const train::EpochRecord& e) { log_epoch(e, tc.epochs); });
    const auto test = train::evaluate(result.model, bs);
    vals.push_back(result.best_val.accuracy);
    tests.push_back(test.accuracy);
    folds_csv += std::to_string(f) + "," + std::to_string(result.best_epoch) + "," + num(result.best_val.accuracy) +
                 "," + num(test.accuracy) + "\n";

    const std::string suffix = cv_folds > 0 ? "_fold" + std::to_string(f) : "";
    io::save_model(result.model, (out / ("model" + suffix + ".dvsm")).string());
    write_text(out / ("history" + suffix + ".csv"), history_csv(result.history));
    json m;
    m["fold"] = f;
    m["best_epoch"] = result.best_epoch;
    m["val"] = metrics_json(result.best_val);
    m["test"] = metrics_json(test);
    write_text(out / ("metrics" + suffix + ".json"), m.dump(2) + "\n");
    std::printf("fold %d: best epoch %d  val_acc %.4f  site-B test_acc %.4f\n", f, result.best_epoch,
                result.best_val.accuracy, test.accuracy);
  }
  if (cv_folds > 0) {
    const auto mean_std = [](const std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      return std::pair{mean, sd};
    };
    const auto [vm, vsd] = mean_std(vals);
    const auto [tm, tsd] = mean_std(tests);
    summary["folds"] = cv_folds;
    summary["val_acc_mean"] = vm;
    summary["val_acc_std"] = vsd;
    summary["test_acc_mean"] = tm;
    summary["test_acc_std"] = tsd;
    write_text(out / "folds.csv", folds_csv);
    write_text(out / "cv.json", summary.dump(2) + "\n");
    std::printf("cross-validation (%d folds): val_acc %.4f +- %.4f  test_acc %.4f +- %.4f\n", cv_folds, vm, vsd, tm,
                tsd);
  }
  return 0;
}

int cmd_eval(const json& cfg, const std::string& model_path, const std::string& data_path) {
  const fs::path out = prepare_out(cfg);
  const nn::Model model = io::load_model(model_path);
  const synth::Dataset data = io::load_dataset(data_path);
  const auto p = train::parse_paradigm(cfg["train"]["paradigm"].get<std::string>());
  const auto m = train::evaluate(model, data, p);
  json j = metrics_json(m);
  j["model"] = model_path;
  j["data"] = data_path;
  write_text(out / "eval.json", j.dump(2) + "\n");
  report::Matrix cm;
  for (const auto& row : m.confusion) cm.emplace_back(row.begin(), row.end());
  std::vector<std::string> names(synth::class_names().begin(), synth::class_names().end());
  write_text(out / "confusion.csv", report::confusion_csv(cm, names));
  std::printf("accuracy %.4f  loss %.4f  (%zu samples)\n", m.accuracy, m.loss, m.total);
  return 0;
}

int cmd_quantize(const json& cfg, const std::string& model_path, const std::string& holdout_path,
                 const std::string& ir_path) {
  const fs::path out = prepare_out(cfg);
  const nn::Model model = io::load_model(model_path);
  const auto seed = cfg["seed"].get<std::uint64_t>();
  const auto p = input_paradigm(train::parse_paradigm(cfg["train"]["paradigm"].get<std::string>()));
  const int n_cal = cfg["quantize"]["calibration"].get<int>();
  const int n_hold = cfg["quantize"]["holdout"].get<int>();
  if (n_cal < 32) throw ConfigError("quantize.calibration must be at least 32");
  if (n_hold < 1) throw ConfigError("quantize.holdout must be positive");

  // Calibration: samples from the training split of site A.
  const synth::Dataset a = io::load_dataset((data_dir(cfg) / "site_a.dvs1").string());
  const auto folds = train::kfold_split(a, cfg["train"]["split_folds"].get<int>(), seed);
  auto cal_idx = folds[static_cast<std::size_t>(cfg["train"]["fold"].get<int>())].train;
  if (cal_idx.size() > static_cast<std::size_t>(n_cal)) cal_idx.resize(static_cast<std::size_t>(n_cal));
  const auto cal = train::prepare(a, cal_idx, p);

  // Hold-out: a given dataset file, or fresh site-A samples.
  synth::Dataset hold;
  if (!holdout_path.empty()) {
    hold = io::load_dataset(holdout_path);
  } else {
    const int per = n_hold / synth::kClasses;
    std::array<int, synth::kClasses> counts{};
    for (int c = 0; c < synth::kClasses; ++c) counts[c] = per + (c < n_hold % synth::kClasses ? 1 : 0);
    hold = synth::gen_site(counts, synth::site_a_profile(), derive_seed(seed, 0x686f6c64));
  }
  const auto hs = train::prepare(hold, p);

  quant::QuantizeOptions qo;
  qo.equalize = cfg["quantize"]["equalize"].get<bool>();
  qo.equalize_passes = cfg["quantize"]["equalize_passes"].get<int>();
  if (qo.equalize_passes < 0) throw ConfigError("quantize.equalize_passes must be non-negative");
  const quant::QModel q = quant::quantize_pow2(model, cal.inputs, qo);
  quant::save_qmodel(q, (out / "model.dvsq").string());
  const auto rep = quant::compare_float_int(model, q, hs.inputs, hs.labels);
  quant::IrStats ir;
  if (!ir_path.empty()) {
    std::ofstream irf(ir_path, std::ios::trunc);
    if (!irf) throw IoError("cannot write '" + ir_path + "'");
    ir = quant::emit_shiftadd(q, irf);
  } else {
    ir = quant::shiftadd_stats(q);
  }

  json j;
  j["model"] = model_path;
  j["holdout_samples"] = rep.total;
  j["agreement"] = rep.agreement;
  j["float_accuracy"] = rep.float_accuracy;
  j["int_accuracy"] = rep.int_accuracy;
  j["float_class_accuracy"] = rep.float_class_accuracy;
  j["int_class_accuracy"] = rep.int_class_accuracy;
  j["class_delta"] = rep.class_delta;
  j["max_logit_dev"] = rep.max_logit_dev;
  j["mean_logit_dev"] = rep.mean_logit_dev;
  j["overflow_samples"] = rep.overflow_samples;
  j["clipped_values"] = rep.clipped_values;
  json layers = json::array();
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    const auto& l = q.layers[i];
    const auto& s = ir.layers[i];
    layers.push_back({{"op", quant::to_string(l.op)},
                      {"gamma", l.gamma},
                      {"frac_in", l.frac_in},
                      {"frac_out", l.frac_out},
                      {"ops", s.total()},
                      {"mac_ops", s.mac_ops},
                      {"tree_depth", s.tree_depth}});
  }
  j["layers"] = layers;
  j["ir_total_ops"] = ir.total_ops;
  j["ir_mac_ops"] = ir.mac_ops;
  j["ir_total_depth"] = ir.total_depth;
  write_text(out / "quantize.json", j.dump(2) + "\n");
  std::printf("agreement %.4f  float acc %.4f  int acc %.4f  max |dlogit| %.4g  mean |dlogit| %.4g\n", rep.agreement,
              rep.float_accuracy, rep.int_accuracy, rep.max_logit_dev, rep.mean_logit_dev);
  std::printf("IR: %llu ops, %llu shift-add MACs, adder depth %d\n", static_cast<unsigned long long>(ir.total_ops),
              static_cast<unsigned long long>(ir.mac_ops), ir.total_depth);
  return 0;
}

int cmd_bench(const json& cfg, const std::string& model_path, const std::string& qmodel_path,
              const std::string& trace_path, bool save_trace) {
  const json& b = cfg["bench"];
  const std::string engine = b["engine"].get<std::string>();
  if (engine != "float" && engine != "integer") throw ConfigError("bench.engine must be 'float' or 'integer'");
  const int n = b["samples"].get<int>();
  if (n < 100) throw ConfigError("bench.samples must be at least 100");
  const fs::path out = prepare_out(cfg);
  const auto seed = cfg["seed"].get<std::uint64_t>();

  stream::Trace trace;
  if (!trace_path.empty()) {
    trace = stream::load_trace(trace_path);
  } else {
    // Ten 12.5 m tiles side by side; one event per window on average.
    const std::size_t tiles = 10, s_total = tiles * 10 + 1;
    const std::size_t rows = (static_cast<std::size_t>(n) + tiles - 1) / tiles;
    std::vector<stream::ScheduledEvent> events;
    Rng rng(derive_seed(seed, 0x6265));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t tile = 0; tile < tiles; ++tile) {
        stream::ScheduledEvent e;
        e.cls = static_cast<synth::EventClass>(rng.below(synth::kClasses));
        e.t = r * stream::kWindowT;
        e.s = tile * 10 + 3 + rng.below(5);
        events.push_back(e);
      }
    }
    trace = stream::gen_trace(synth::site_a_profile(), s_total, rows * stream::kWindowT, events, seed);
  }
  if (save_trace) stream::save_trace(trace, (out / "trace.dvt1").string());

  const auto windows = stream::slice_windows(trace);
  const auto p = input_paradigm(train::parse_paradigm(cfg["train"]["paradigm"].get<std::string>()));
  std::vector<Tensor> samples;
  for (std::size_t i = 0; i < windows.size() && samples.size() < static_cast<std::size_t>(n); ++i) {
    samples.push_back(train::prepare_input(windows[i].values, p));
  }
  stream::BenchOptions opt;
  opt.workers = b["workers"].get<int>();
  opt.warmup = static_cast<std::size_t>(b["warmup"].get<int>());

  stream::BenchReport rep;
  if (engine == "float") {
    rep = stream::bench(io::load_model(model_path), samples, opt);
  } else {
    quant::QModel q;
    if (!qmodel_path.empty()) {
      q = quant::load_qmodel(qmodel_path);
    } else {
      throw ConfigError("bench: the integer engine needs --qmodel");
    }
    rep = stream::bench(q, samples, opt);
  }
  write_text(out / "bench.json", stream::report_json(rep));
  write_text(out / "bench.csv", stream::report_csv(rep));
  std::printf("%s engine, %d worker(s): %zu samples in %.3f s  ->  %.0f samples/s\n", stream::to_string(rep.engine).c_str(),
              rep.workers, rep.samples, rep.wall_seconds, rep.throughput);
  std::printf("latency p50 %.2f us  p99 %.2f us  ->  range %.2f km\n", rep.latency_p50 * 1e6, rep.latency_p99 * 1e6,
              rep.range_m / 1000.0);
  return 0;
}

int cmd_range(const json& cfg, double latency_us, double latency_s, bool have_us, bool have_s, bool write) {
  if (have_us == have_s) throw ConfigError("range: give exactly one of --latency-us or --latency-s");
  const double latency = have_us ? latency_us * 1e-6 : latency_s;
  const double meters = stream::fiber_range(latency);
  if (write) {
    const fs::path out = prepare_out(cfg);
    json j{{"latency_s", latency}, {"range_m", meters}, {"range_km", meters / 1000.0}};
    write_text(out / "range.json", j.dump(2) + "\n");
  }
  // A capability figure: round down to the displayed 10 m resolution.
  std::printf("%.2f km\n", std::floor(meters / 10.0) / 100.0);
  std::printf("(%.6g m for %.6g s per sample)\n", meters, latency);
  return 0;
}

int cmd_report(const json& cfg, const std::vector<std::string>& metrics_paths, const std::string& grid_path) {
  const fs::path out = prepare_out(cfg);
  std::string md = "# Report\n\n";
  std::vector<std::string> names(synth::class_names().begin(), synth::class_names().end());

  for (std::size_t i = 0; i < metrics_paths.size(); ++i) {
    json m;
    try {
      m = json::parse(read_text(metrics_paths[i]));
    } catch (const json::exception& e) {
      throw FormatError(metrics_paths[i] + ": " + e.what());
    }
    // Accept eval output (top-level matrix) and train output (val / test).
    std::vector<std::pair<std::string, json>> sets;
    if (m.contains("confusion")) sets.emplace_back("eval", m);
    for (const char* key : {"val", "test"}) {
      if (m.contains(key) && m[key].contains("confusion")) sets.emplace_back(key, m[key]);
    }
    if (sets.empty()) throw FormatError(metrics_paths[i] + ": no confusion matrix found");
    for (const auto& [key, set] : sets) {
      report::Matrix cm;
      try {
        cm = set["confusion"].get<report::Matrix>();
      } catch (const json::exception& e) {
        throw FormatError(metrics_paths[i] + ": malformed confusion matrix: " + e.what());
      }
      std::vector<std::string> labels = names;
      if (cm.size() != labels.size()) {
        labels.clear();
        for (std::size_t c = 0; c < cm.size(); ++c) labels.push_back("class " + std::to_string(c));
      }
      const std::string stem = "confusion_" + std::to_string(i) + "_" + key;
      write_text(out / (stem + ".svg"), report::confusion_svg(cm, labels, key + " confusion"));
      write_text(out / (stem + ".csv"), report::confusion_csv(cm, labels));
      md += "- " + key + " confusion from `" + metrics_paths[i] + "`: " + stem + ".svg";
      if (set.contains("accuracy")) md += " (accuracy " + num(set["accuracy"].get<double>(), "%.4f") + ")";
      md += "\n";
    }
  }
  if (!grid_path.empty()) {
    const auto pts = report::parse_grid_csv(read_text(grid_path), grid_path);
    write_text(out / "depth.svg", report::depth_svg(pts));
    write_text(out / "depth.csv", report::depth_csv(pts));
    md += "- accuracy vs depth from `" + grid_path + "`: depth.svg\n";
  }
  md += "\n";
  const nn::Model ref = nn::model_build(3, synth::kClasses, 0);
  const auto stats = nn::model_stats(ref);
  md += report::accounting_markdown(stats, ref);
  write_text(out / "report.md", md);
  json acc{{"params", stats.params},
           {"macs", stats.macs},
           {"flops", stats.flops()},
           {"published_params", report::kPublishedParams},
           {"published_flops", report::kPublishedFlops}};
  write_text(out / "accounting.json", acc.dump(2) + "\n");
  std::printf("report: %s\n", (out / "report.md").string().c_str());
  std::printf("params %llu (published %u), MACs %llu (published FLOPs %u)\n",
              static_cast<unsigned long long>(stats.params), report::kPublishedParams,
              static_cast<unsigned long long>(stats.macs), report::kPublishedFlops);
  return 0;
}

int exit_code(const std::string& kind) {
  if (kind == "config_error" || kind == "usage_error") return 2;
  if (kind == "value_error") return 3;
  if (kind == "shape_error") return 4;
  if (kind == "format_error") return 5;
  if (kind == "io_error") return 6;
  return 1;
}

int fail(const std::string& kind, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::fprintf(stderr, "dvs: error[%s]: %s\n", kind.c_str(), one_line.c_str());
  return exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dvs: synthetic vibration-sensing classifier toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* o_config = app.add_option("--config", config_path, "JSON config file (unknown keys are rejected)");
  auto* o_seed = app.add_option("--seed", seed, "global seed");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  std::string data_root;
  auto* o_data = app.add_option("--data", data_root, "directory with site_a.dvs1 / site_b.dvs1 (default: --out)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate site A / site B datasets and a manifest");
  std::string preset;
  int count = -1;
  std::vector<int> counts_a, counts_b;
  gen->add_option("--preset", preset, "count preset")->check(CLI::IsMember({"table1"}));
  auto* o_count = gen->add_option("--count", count, "samples per class at both sites");
  auto* o_counts_a = gen->add_option("--counts-a", counts_a, "per-class counts at site A")->expected(3)->delimiter(',');
  auto* o_counts_b = gen->add_option("--counts-b", counts_b, "per-class counts at site B")->expected(3)->delimiter(',');

  // train
  auto* tr = app.add_subcommand("train", "train one model, cross-validate, or run the depth x alpha grid");
  std::string paradigm, target;
  double alpha = 0.0, lr = 0.0;
  int depth = 0, epochs = 0, batch = 0, folds = 0, fold = 0;
  bool grid = false;
  auto* o_par = tr->add_option("--paradigm", paradigm, "st | ss | cd")->check(CLI::IsMember({"st", "ss", "cd"}));
  auto* o_alpha = tr->add_option("--alpha", alpha, "spectral weight in [0, 1]");
  auto* o_depth = tr->add_option("--depth", depth, "blocks, 1..5");
  auto* o_epochs = tr->add_option("--epochs", epochs, "training epochs");
  auto* o_lr = tr->add_option("--lr", lr, "initial learning rate");
  auto* o_batch = tr->add_option("--batch", batch, "mini-batch size");
  auto* o_target = tr->add_option("--target", target, "spectral target: dft2ch | bandenergy8");
  auto* o_fold = tr->add_option("--fold", fold, "validation fold for single runs");
  tr->add_option("--folds", folds, "cross-validate over this many folds");
  tr->add_flag("--grid", grid, "depth x alpha study (CSV)");

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset file");
  std::string model_path, data_path;
  ev->add_option("--model", model_path, "checkpoint (.dvsm)")->required();
  ev->add_option("--data", data_path, "dataset (.dvs1)")->required();
  auto* o_ev_par = ev->add_option("--paradigm", paradigm, "input preparation: st | ss | cd");

  // quantize
  auto* qz = app.add_subcommand("quantize", "power-of-two quantization and float/integer comparison");
  std::string holdout, ir_path;
  int calibration = 0, n_holdout = 0;
  qz->add_option("--model", model_path, "checkpoint (.dvsm)")->required();
  qz->add_option("--holdout", holdout, "hold-out dataset (default: fresh site-A samples)");
  qz->add_option("--ir", ir_path, "write the shift-add program here");
  auto* o_cal = qz->add_option("--calibration", calibration, "calibration sample count (>= 32)");
  auto* o_hold = qz->add_option("--holdout-count", n_holdout, "fresh hold-out sample count");
  bool no_equalize = false;
  qz->add_flag("--no-equalize", no_equalize, "skip channel rescaling before snapping");

  // bench
  auto* bn = app.add_subcommand("bench", "throughput / latency of the float or integer engine");
  std::string engine, qmodel_path, trace_path;
  int workers = 0, samples = 0;
  bool save_trace = false;
  bn->add_option("--model", model_path, "checkpoint (.dvsm) for the float engine");
  bn->add_option("--qmodel", qmodel_path, "quantized model (.dvsq) for the integer engine");
  bn->add_option("--trace", trace_path, "trace file (.dvt1); default: synthesized");
  bn->add_flag("--save-trace", save_trace, "write the synthesized trace");
  auto* o_engine = bn->add_option("--engine", engine, "float | integer");
  auto* o_workers = bn->add_option("--workers", workers, "worker threads");
  auto* o_samples = bn->add_option("--samples", samples, "timed samples (>= 100)");

  // range
  auto* rg = app.add_subcommand("range", "monitorable fiber length for a per-sample latency");
  double latency_us = 0.0, latency_s = 0.0;
  auto* o_lus = rg->add_option("--latency-us", latency_us, "latency in microseconds");
  auto* o_ls = rg->add_option("--latency-s", latency_s, "latency in seconds");

  // report
  auto* rp = app.add_subcommand("report", "SVG / CSV plots and the accounting summary");
  std::vector<std::string> metrics_paths;
  std::string grid_path;
  rp->add_option("--metrics", metrics_paths, "metrics JSON from train or eval");
  rp->add_option("--grid", grid_path, "grid CSV from train --grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  try {
    json cfg = default_config();
    if (o_config->count()) merge_checked(cfg, load_config_file(config_path), "");
    if (o_seed->count()) cfg["seed"] = seed;
    if (o_out->count()) cfg["out"] = out_dir;
    if (o_data->count()) cfg["data"] = data_root;

    if (gen->parsed()) {
      if (o_count->count() && (o_counts_a->count() || o_counts_b->count())) {
        throw ConfigError("gen: --count conflicts with --counts-a / --counts-b");
      }
      if (!preset.empty()) {
        const synth::DatasetSpec d;
        cfg["gen"]["counts_a"] = d.counts_a;
        cfg["gen"]["counts_b"] = d.counts_b;
      }
      if (o_count->count()) {
        if (count < 0) throw ValueError("gen: --count must be non-negative");
        cfg["gen"]["counts_a"] = {count, count, count};
        cfg["gen"]["counts_b"] = {count, count, count};
      }
      if (o_counts_a->count()) cfg["gen"]["counts_a"] = counts_a;
      if (o_counts_b->count()) cfg["gen"]["counts_b"] = counts_b;
      return cmd_gen(cfg);
    }
    if (tr->parsed()) {
      auto& t = cfg["train"];
      if (o_par->count()) t["paradigm"] = paradigm;
      if (o_alpha->count()) t["alpha"] = alpha;
      if (o_depth->count()) t["depth"] = depth;
      if (o_epochs->count()) t["epochs"] = epochs;
      if (o_lr->count()) t["lr"] = lr;
      if (o_batch->count()) t["batch"] = batch;
      if (o_target->count()) t["target"] = target;
      if (o_fold->count()) t["fold"] = fold;
      if (folds < 0) throw ValueError("train: --folds must be positive");
      if (grid && folds > 0) throw ConfigError("train: --grid and --folds are exclusive");
      return cmd_train(cfg, folds, grid);
    }
    if (ev->parsed()) {
      if (o_ev_par->count()) cfg["train"]["paradigm"] = paradigm;
      return cmd_eval(cfg, model_path, data_path);
    }
    if (qz->parsed()) {
      if (o_cal->count()) cfg["quantize"]["calibration"] = calibration;
      if (o_hold->count()) cfg["quantize"]["holdout"] = n_holdout;
      if (no_equalize) cfg["quantize"]["equalize"] = false;
      return cmd_quantize(cfg, model_path, holdout, ir_path);
    }
    if (bn->parsed()) {
      auto& b = cfg["bench"];
      if (o_engine->count()) b["engine"] = engine;
      if (o_workers->count()) b["workers"] = workers;
      if (o_samples->count()) b["samples"] = samples;
      if (b["engine"] == "float" && model_path.empty()) throw ConfigError("bench: the float engine needs --model");
      return cmd_bench(cfg, model_path, qmodel_path, trace_path, save_trace);
    }
    if (rg->parsed()) {
      return cmd_range(cfg, latency_us, latency_s, o_lus->count() > 0, o_ls->count() > 0, o_out->count() > 0);
    }
    if (rp->parsed()) {
      if (metrics_paths.empty() && grid_path.empty()) throw ConfigError("report: give --metrics and/or --grid");
      return cmd_report(cfg, metrics_paths, grid_path);
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const json::exception& e) {
    return fail("config_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return fail("usage_error", "no subcommand");
}
