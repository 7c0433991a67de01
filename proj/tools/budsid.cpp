// Command-line entry point: gen, train, eval, sweep, quantize, bench.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <variant>

#include "CLI11.hpp"
#include "json.hpp"

#include "budsid/config.hpp"
#include "budsid/dataset.hpp"
#include "budsid/harness.hpp"
#include "budsid/model_io.hpp"
#include "budsid/quant.hpp"
#include "budsid/trace_io.hpp"

namespace fs = std::filesystem;
using namespace budsid;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

KeyValues read_config(const Common& c) { return c.config.empty() ? KeyValues{} : load_config(c.config); }

EvalConfig make_eval_config(const Common& c, const KeyValues& kv, DesignKind kind, const std::string& classifier) {
  EvalConfig cfg = eval_config_from(kv, kind);
  if (c.seed) cfg.seed = *c.seed;
  if (!classifier.empty()) cfg.classifier = classifier_from_string(classifier);
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory (" + ec.message() + ")", dir);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed (overrides BUDSID_SEED and the config)");
}

json latency_json(const LatencyReport& r) {
  return {{"preprocess_ms", {{"mean", r.preprocess.mean_ms}, {"sd", r.preprocess.sd_ms}}},
          {"predict_ms", {{"mean", r.predict.mean_ms}, {"sd", r.predict.sd_ms}}},
          {"n_runs", r.n_runs},
          {"predicted_class", r.predicted_class},
          {"note", r.note}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetometer finger-identification lab: simulate, train, evaluate, quantize"};
  app.require_subcommand(1);

  // gen
  Common gen_c;
  std::string gen_design, gen_out;
  std::optional<int> gen_participants, gen_reps;
  auto* gen = app.add_subcommand("gen", "simulate a dataset and write traces plus manifest");
  add_common(gen, gen_c);
  gen->add_option("--design", gen_design, "single-tap | double-tap");
  gen->add_option("--participants", gen_participants, "participant count");
  gen->add_option("--reps", gen_reps, "repetitions per design cell");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  Common train_c;
  std::string train_data, train_classifier, train_out = "model.bidm", train_report;
  auto* train = app.add_subcommand("train", "train a general model and save it");
  add_common(train, train_c);
  train->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--classifier", train_classifier, "cnn | svm");
  train->add_option("--out", train_out, "model file (BIDM)");
  train->add_option("--report", train_report, "optional report.json path");

  // eval
  Common eval_c;
  std::string eval_data, eval_classifier, eval_regime = "general", eval_out = ".";
  auto* eval = app.add_subcommand("eval", "run an evaluation regime and write report.json + confusion.csv");
  add_common(eval, eval_c);
  eval->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--regime", eval_regime, "general | individual | loocv");
  eval->add_option("--classifier", eval_classifier, "cnn | svm");
  eval->add_option("--out", eval_out, "output directory");

  // sweep
  Common sweep_c;
  std::string sweep_data, sweep_classifier, sweep_out = ".";
  auto* sweep = app.add_subcommand("sweep", "general-model accuracy across the nine window configurations");
  add_common(sweep, sweep_c);
  sweep->add_option("--data", sweep_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--classifier", sweep_classifier, "cnn | svm");
  sweep->add_option("--out", sweep_out, "output directory for sweep.csv");

  // quantize
  Common quant_c;
  std::string quant_model, quant_out = "model.bidq", quant_data;
  auto* quant = app.add_subcommand("quantize", "int8 dynamic-range quantization of a CNN model");
  add_common(quant, quant_c);
  quant->add_option("--model", quant_model, "float CNN model (BIDM)")->required()->check(CLI::ExistingFile);
  quant->add_option("--out", quant_out, "quantized model file (BIDQ)");
  quant->add_option("--data", quant_data, "dataset for a float-vs-int8 comparison on the test split")
      ->check(CLI::ExistingDirectory);

  // bench
  Common bench_c;
  std::string bench_model, bench_data;
  int bench_runs = 100;
  auto* bench = app.add_subcommand("bench", "host latency of preprocessing and prediction");
  add_common(bench, bench_c);
  bench->add_option("--model", bench_model, "CNN model (BIDM) or quantized model (BIDQ)")->required()->check(CLI::ExistingFile);
  bench->add_option("--data", bench_data, "dataset to take a trace from (simulated if omitted)")->check(CLI::ExistingDirectory);
  bench->add_option("--runs", bench_runs, "repetitions (>= 100)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const auto kv = read_config(gen_c);
      std::optional<DesignKind> kind;
      if (!gen_design.empty()) kind = design_from_string(gen_design);
      DesignSpec design = design_from_config(kv, kind);
      if (gen_participants) design.participants = *gen_participants;
      if (gen_reps) design.reps = *gen_reps;
      if (design.participants < 1 || design.reps < 1) throw ConfigError("participants and reps must be at least 1");
      const auto seed = resolve_seed(kv, gen_c.seed);
      const auto m = simulate_dataset(design, PopulationParams{}, seed, gen_out);
      std::cout << "wrote " << m.records.size() << " traces to " << gen_out << "\n";
    } else if (*train) {
      const auto kv = read_config(train_c);
      const auto manifest = load_manifest(train_data);
      const auto cfg = make_eval_config(train_c, kv, manifest.design.kind, train_classifier);
      const auto ex = make_examples(receive_trials(load_trials(manifest), cfg), cfg.window);
      TrainedModel kept;
      const auto rep = run_general(ex, cfg, &kept);
      if (kept.cnn) save_model(train_out, *kept.cnn);
      if (kept.svm) save_model(train_out, *kept.svm);
      if (!train_report.empty()) write_text(train_report, report_json(rep).dump(2) + "\n");
      std::cout << "test accuracy " << rep.accuracy << ", model written to " << train_out << "\n";
    } else if (*eval) {
      const auto kv = read_config(eval_c);
      const auto manifest = load_manifest(eval_data);
      auto cfg = make_eval_config(eval_c, kv, manifest.design.kind, eval_classifier);
      Regime regime = regime_from_string(eval_regime);
      if (eval->count("--regime") == 0)
        if (auto it = kv.find("regime"); it != kv.end()) regime = regime_from_string(it->second);
      const auto filled = receive_trials(load_trials(manifest), cfg);
      auto rep = run_regime(regime, make_examples(filled, cfg.window), cfg);
      rep.rejected_trials = filled.rejected.size();
      ensure_dir(eval_out);
      write_text(fs::path(eval_out) / "report.json", report_json(rep).dump(2) + "\n");
      write_text(fs::path(eval_out) / "confusion.csv", confusion_csv(rep.confusion, rep.design));
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << to_string(regime) << " " << to_string(cfg.classifier) << ": accuracy " << rep.accuracy << ", mean "
                << rep.mean_accuracy << " (sd " << rep.sd_accuracy << ") over " << rep.models.size() << " model(s)\n";
    } else if (*sweep) {
      const auto kv = read_config(sweep_c);
      const auto manifest = load_manifest(sweep_data);
      const auto cfg = make_eval_config(sweep_c, kv, manifest.design.kind, sweep_classifier);
      const auto table = window_sweep(receive_trials(load_trials(manifest), cfg), default_sweep_configs(), cfg);
      ensure_dir(sweep_out);
      const auto csv = sweep_csv(table);
      write_text(fs::path(sweep_out) / "sweep.csv", csv);
      std::cout << csv;
    } else if (*quant) {
      const auto kv = read_config(quant_c);
      const auto loaded = load_model(quant_model);
      const auto* model = std::get_if<CnnModel<float>>(&loaded);
      if (!model) throw std::invalid_argument("quantize: " + quant_model + " is not a float CNN model");
      const auto q = quantize_dynamic(*model);
      save_model(quant_out, q);
      const auto float_bytes = serialize(*model).size();
      const auto quant_bytes = serialize(q).size();
      json out = {{"float_bytes", float_bytes},
                  {"quant_bytes", quant_bytes},
                  {"ratio", static_cast<double>(float_bytes) / static_cast<double>(quant_bytes)}};
      if (!quant_data.empty()) {
        const auto manifest = load_manifest(quant_data);
        auto cfg = make_eval_config(quant_c, kv, manifest.design.kind, "cnn");
        cfg.window = {model->shape().n_samples / 2, model->shape().n_samples / 2};
        if (auto it = kv.find("window"); it != kv.end()) cfg.window = parse_window(it->second);
        const auto ex = make_examples(receive_trials(load_trials(manifest), cfg), cfg.window);
        std::vector<int> labels(ex.labels);
        const auto split = stratified_split(labels, cfg.train.split, cfg.seed);
        const auto test = cnn_inputs(ex, split.test);
        const auto pf = cnn_predict(*model, test);
        const auto pq = quant_predict(q, test);
        std::size_t agree = 0, ok_f = 0, ok_q = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
          agree += pf[i] == pq[i];
          ok_f += pf[i] == test.y[i];
          ok_q += pq[i] == test.y[i];
        }
        const auto n = static_cast<double>(test.size());
        out["test_examples"] = test.size();
        out["argmax_agreement"] = agree / n;
        out["float_accuracy"] = ok_f / n;
        out["quant_accuracy"] = ok_q / n;
      }
      std::cout << out.dump(2) << "\n";
    } else if (*bench) {
      const auto loaded = load_model(bench_model);
      if (std::holds_alternative<SvmModel>(loaded)) throw std::invalid_argument("bench: SVM models are not supported");
      const CnnShape shape = std::holds_alternative<QuantModel>(loaded) ? std::get<QuantModel>(loaded).shape
                                                                         : std::get<CnnModel<float>>(loaded).shape();
      const auto seed = resolve_seed(read_config(bench_c), bench_c.seed);
      const DesignKind kind = shape.n_classes == 9 ? DesignKind::double_tap : DesignKind::single_tap;
      RawTrace tr;
      if (!bench_data.empty()) {
        const auto m = load_manifest(bench_data);
        tr = read_trace(m.root / m.records.front().path);
      } else {
        DesignSpec d{kind, 1, 1};
        const auto spec = enumerate_trials(d, seed).front();
        tr = simulate_spec(spec, sample_participant(0, PopulationParams{}, seed));
      }
      const LinkProfile link = kind == DesignKind::double_tap ? double_tap_link() : single_tap_link();
      BenchInput in{ble_channel(tr, link, seed), window_center(tr), {shape.n_samples / 2, shape.n_samples / 2},
                    tr.hand, tr.ring_inverted};
      const auto rep = std::visit(
          [&](const auto& m) -> LatencyReport {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, SvmModel>) throw std::logic_error("unreachable");
            else return bench_latency(m, in, bench_runs);
          },
          loaded);
      std::cout << latency_json(rep).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
