#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "probts/anomaly.hpp"
#include "probts/evaluation.hpp"
#include "probts/experiment.hpp"
#include "probts/neuralqr.hpp"
#include "probts/npts.hpp"
#include "probts/ssm.hpp"

namespace fs = std::filesystem;
using namespace probts;

namespace {

struct ModelFlags {
  std::string estimator = "npts";
  int pred_len = 1;
  int context_len = 0;
  std::vector<double> quantiles = kDefaultQuantiles;
  std::uint64_t seed = 0;
  std::string alpha = "auto";
  bool seasonal = false;
  std::string preset = "local_level";
  int season_length = 0;
  int num_paths = 100;
  int num_batches = 5000;
  std::vector<int> hidden{40, 40, 40};
  std::string freq = "H";

  void add_to(CLI::App& cmd) {
    cmd.add_option("--estimator", estimator, "npts, ssm or mlpqr")
        ->check(CLI::IsMember({"npts", "ssm", "mlpqr"}))
        ->capture_default_str();
    cmd.add_option("--pred-len", pred_len, "Prediction length")->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--context-len", context_len, "Context length (0: model default)")
        ->check(CLI::NonNegativeNumber);
    cmd.add_option("--quantiles", quantiles, "Quantile levels")->delimiter(',');
    cmd.add_option("--seed", seed, "Master seed")->capture_default_str();
    cmd.add_option("--alpha", alpha, "NPTS decay: number, inf or auto")->capture_default_str();
    cmd.add_flag("--seasonal", seasonal, "Seasonal NPTS");
    cmd.add_option("--preset", preset, "SSM preset")
        ->check(CLI::IsMember({"local_level", "level_trend", "seasonal"}))
        ->capture_default_str();
    cmd.add_option("--season-length", season_length, "Season length (0: frequency default)")
        ->check(CLI::NonNegativeNumber);
    cmd.add_option("--num-paths", num_paths, "Sample paths per forecast")->check(CLI::PositiveNumber);
    cmd.add_option("--num-batches", num_batches, "MLP training batches")->check(CLI::PositiveNumber);
    cmd.add_option("--hidden", hidden, "MLP hidden layer widths")->delimiter(',');
    cmd.add_option("--freq", freq, "Series frequency, e.g. H, D, 15min")->capture_default_str();
  }

  int effective_season() const {
    return season_length > 0 ? season_length : Frequency::parse(freq).season_length();
  }

  ConfigNode estimator_config() const {
    const std::uint64_t component_seed = derive_seed(seed, "estimator");
    if (estimator == "npts") {
      NptsConfig c;
      if (alpha != "auto") {
        if (alpha == "inf") {
          c.alpha = kInf;
        } else {
          try {
            c.alpha = std::stod(alpha);
          } catch (const std::exception&) {
            throw CLI::ValidationError("--alpha", "expected a number, inf or auto");
          }
        }
      }
      c.seasonal = seasonal;
      c.season_length = season_length;
      c.num_sample_paths = num_paths;
      c.context_length = context_len;
      c.seed = component_seed;
      c.validate();
      return c.to_config();
    }
    if (estimator == "ssm") {
      SsmEstimatorConfig c;
      c.preset = SsmPreset::parse(preset, preset == "seasonal" ? effective_season() : 1);
      c.num_sample_paths = num_paths;
      c.seed = component_seed;
      return c.to_config();
    }
    MlpQrConfig m;
    if (context_len > 0) m.context_length = context_len;
    m.prediction_length = pred_len;
    m.hidden_cells = hidden;
    m.quantiles = quantiles;
    TrainerConfig t;
    t.num_batches = num_batches;
    t.seed = component_seed;
    return MlpQrEstimator(m, t).config();
  }
};

Stream<TimeSeriesRecord> open_data(const std::string& path, const std::string& freq) {
  return read_jsonlines(path, Frequency::parse(freq));
}

std::string absolute(const std::string& path) { return fs::weakly_canonical(fs::absolute(path)).string(); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write '" + path.string() + "'");
  return out;
}

// generate ------------------------------------------------------------------

int run_generate(const std::string& spec_path, const std::string& out_path) {
  std::ifstream in(spec_path);
  if (!in) throw DatasetError("cannot read '" + spec_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  const auto spec = synth_spec_from_json(j);
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto n = write_jsonlines(generate_synthetic(spec), out);
  write_config_log(out.parent_path().empty() ? fs::path(".") : out.parent_path(), synth_spec_to_config(spec),
                   out.filename().string() + ".config");
  log::info("generate: wrote " + std::to_string(n) + " series");
  return 0;
}

// train / predict -----------------------------------------------------------

int run_train(const ModelFlags& flags, const std::string& data, const fs::path& out) {
  ExperimentConfig exp;
  exp.command = "train";
  exp.seed = flags.seed;
  exp.data = absolute(data);
  exp.freq = flags.freq;
  exp.estimator = flags.estimator_config();
  exp.split.prediction_length = flags.pred_len;
  exp.quantiles = flags.quantiles;
  fs::create_directories(out);
  write_config_log(out, exp.to_config());

  const auto estimator = make_estimator(exp.estimator);
  const Source<TimeSeriesRecord> source = [&] { return open_data(exp.data, exp.freq); };
  if (const auto* mlp = dynamic_cast<const MlpQrEstimator*>(estimator.get())) {
    mlp->train_predictor(source).save(out);
  } else {
    auto txt = open_out(out / "model_config.txt");
    txt << serialize_config(exp.estimator);
  }
  return 0;
}

std::unique_ptr<Predictor> load_model(const fs::path& dir) {
  if (fs::exists(dir / "model.bin")) return std::make_unique<MlpQrPredictor>(MlpQrPredictor::load(dir));
  const auto node = read_config_log(dir / "model_config.txt");
  return make_estimator(node)->train([] { return Stream<TimeSeriesRecord>(); });
}

void write_forecast_rows(std::ostream& out, const Forecast& f, std::span<const double> levels) {
  std::vector<std::vector<double>> q;
  for (double l : levels) q.push_back(f.quantile(l));
  const auto mean = f.mean();
  for (int t = 0; t < f.horizon(); ++t) {
    out << f.item_id() << ',' << f.time_at(t).to_string();
    for (const auto& col : q) out << ',' << format_double(col[t]);
    out << ',' << format_double(mean[t]) << '\n';
  }
}

int run_predict(const fs::path& model_dir, const std::string& data, const std::string& freq, int pred_len,
                const std::vector<double>& levels, const fs::path& out) {
  const auto predictor = load_model(model_dir);
  fs::create_directories(out);
  ExperimentConfig exp;
  exp.command = "predict";
  exp.data = absolute(data);
  exp.freq = freq;
  exp.estimator = predictor->config();
  exp.split.prediction_length = pred_len;
  exp.quantiles = levels;
  write_config_log(out, exp.to_config());

  auto csv = open_out(out / "forecasts.csv");
  csv << "item_id,time";
  for (double l : levels) csv << ",q" << format_double(l);
  csv << ",mean\n";
  auto records = open_data(exp.data, freq);
  while (auto r = records.next()) write_forecast_rows(csv, predictor->predict(*r, pred_len), levels);
  return 0;
}

// backtest ------------------------------------------------------------------

int run_backtest(const ExperimentConfig& exp, const fs::path& out) {
  fs::create_directories(out);
  write_config_log(out, exp.to_config());
  const auto estimator = make_estimator(exp.estimator);
  const Source<TimeSeriesRecord> source = [&] { return open_data(exp.data, exp.freq); };

  BacktestOptions options;
  options.split = exp.split;
  options.quantiles = exp.quantiles;
  options.season_length = exp.season_length;

  auto metrics = open_out(out / "metrics.csv");
  write_metrics_header(metrics, exp.quantiles);
  const auto report =
      backtest(*estimator, source, source, options, [&](const MetricRow& row) { write_metrics_row(metrics, row); });
  auto json = open_out(out / "aggregate.json");
  json << report.to_json().dump(2) << "\n";
  auto kv = open_out(out / "aggregate.txt");
  kv << report.to_key_value();
  std::cout << report.to_key_value();
  return 0;
}

// detect --------------------------------------------------------------------

int run_detect(const ModelFlags& flags, const std::string& data, const fs::path& out, const AnomalyConfig& config) {
  fs::create_directories(out);
  ExperimentConfig exp;
  exp.command = "detect";
  exp.seed = flags.seed;
  exp.data = absolute(data);
  exp.freq = flags.freq;
  exp.estimator = flags.estimator_config();
  exp.quantiles = flags.quantiles;
  write_config_log(out, exp.to_config());
  write_config_log(out, config.to_config(), "anomaly_config");

  auto csv = open_out(out / "anomalies.csv");
  write_anomaly_header(csv);
  std::size_t flagged = 0;
  if (flags.estimator == "ssm") {
    const auto ssm = SsmEstimatorConfig::from_config(exp.estimator);
    const SsmScorer scorer(ssm.preset, std::nullopt, ssm.max_iters);
    if (config.method == AnomalyConfig::Method::cdf_pvalue) {
      auto records = open_data(exp.data, exp.freq);
      while (auto r = records.next()) {
        const auto cdfs = scorer.cdfs(*r);
        const auto report = detect_cdf(cdfs, r->target, config.threshold, r->start, r->freq, r->item_id);
        flagged += report.num_flagged();
        write_anomaly_rows(csv, report);
      }
    } else {
      const auto model = scorer.as_step_nll();
      const auto thresholds = calibrate_nll(model, open_data(exp.data, exp.freq), config.levels);
      auto records = open_data(exp.data, exp.freq);
      while (auto r = records.next()) {
        const auto report = detect_nll(model, *r, thresholds, config.flag_level);
        flagged += report.num_flagged();
        write_anomaly_rows(csv, report);
      }
    }
  } else if (flags.estimator == "npts") {
    if (config.method != AnomalyConfig::Method::cdf_pvalue) {
      throw ConfigError("npts supports only the cdf_pvalue method");
    }
    const auto npts = NptsConfig::from_config(exp.estimator);
    auto records = open_data(exp.data, exp.freq);
    while (auto r = records.next()) {
      Rng rng(record_seed(npts.seed, *r));
      const auto cdfs = npts_rolling_cdfs(*r, npts, flags.effective_season(), rng);
      const auto report = detect_cdf(cdfs, r->target, config.threshold, r->start, r->freq, r->item_id);
      flagged += report.num_flagged();
      write_anomaly_rows(csv, report);
    }
  } else {
    throw ConfigError("detect supports the ssm and npts estimators");
  }
  std::cout << "flagged=" << flagged << "\n";
  return 0;
}

// plot-data -----------------------------------------------------------------

int run_plot_data(const ModelFlags& flags, const std::string& data, const std::string& item, int history,
                  const fs::path& out) {
  SplitSpec split;
  split.prediction_length = flags.pred_len;
  WindowSplitter splitter(split);
  const auto estimator = make_estimator(flags.estimator_config());
  const Source<TimeSeriesRecord> source = [&] { return open_data(data, flags.freq); };
  const Source<TimeSeriesRecord> train = [&] {
    auto s = std::make_shared<Stream<TimeSeriesRecord>>(source());
    return Stream<TimeSeriesRecord>([s, &splitter]() -> std::optional<TimeSeriesRecord> {
      while (auto r = s->next()) {
        if (auto v = splitter.training_view(*r)) return v;
      }
      return std::nullopt;
    });
  };
  const auto predictor = estimator->train(train);
  auto records = source();
  while (auto r = records.next()) {
    if (!item.empty() && r->item_id != item) continue;
    const auto windows = splitter.split(*r);
    if (windows.empty()) continue;
    const auto& w = windows.back();
    const auto forecast = predictor->predict(w.history, flags.pred_len);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    auto csv = open_out(out);
    write_plot_data(csv, forecast, &w.history, history, flags.quantiles, w.truth);
    return 0;
  }
  throw DatasetError(item.empty() ? "no series long enough to plot" : "item '" + item + "' not found or too short");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic time series forecasting toolkit"};
  app.require_subcommand(1);

  std::string data, out, spec, config_path, model_dir, item, method = "cdf";
  std::vector<double> levels{0.99, 0.999, 0.9999};
  double threshold = 1e-4, flag_level = 0.99;
  int windows = 1, stride = 0, history = 0;
  ModelFlags flags;

  auto* generate = app.add_subcommand("generate", "Write a synthetic jsonlines dataset");
  generate->add_option("--spec", spec, "JSON spec file")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out, "Output jsonlines path")->required();

  auto* train = app.add_subcommand("train", "Train an estimator and save the model");
  train->add_option("--data", data, "Training jsonlines")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Model directory")->required();
  flags.add_to(*train);

  auto* predict = app.add_subcommand("predict", "Forecast every series with a saved model");
  predict->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--data", data, "Input jsonlines")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out, "Output directory")->required();
  predict->add_option("--pred-len", flags.pred_len, "Prediction length")->check(CLI::PositiveNumber);
  predict->add_option("--quantiles", flags.quantiles, "Quantile levels")->delimiter(',');
  predict->add_option("--freq", flags.freq, "Series frequency");

  auto* bt = app.add_subcommand("backtest", "Rolling-window backtest");
  bt->add_option("--data", data, "Dataset jsonlines")->check(CLI::ExistingFile);
  bt->add_option("--out", out, "Output directory")->required();
  bt->add_option("--windows", windows, "Rolling windows")->check(CLI::PositiveNumber);
  bt->add_option("--stride", stride, "Steps between windows (0: prediction length)")->check(CLI::NonNegativeNumber);
  bt->add_option("--config", config_path, "Re-run from a config log")->check(CLI::ExistingFile);
  flags.add_to(*bt);

  auto* detect = app.add_subcommand("detect", "Flag anomalous observations");
  detect->add_option("--data", data, "Dataset jsonlines")->required()->check(CLI::ExistingFile);
  detect->add_option("--out", out, "Output directory")->required();
  detect->add_option("--method", method, "cdf or nll")->check(CLI::IsMember({"cdf", "nll"}));
  detect->add_option("--threshold", threshold, "p-value threshold")->capture_default_str();
  detect->add_option("--levels", levels, "NLL percentile levels")->delimiter(',');
  detect->add_option("--flag-level", flag_level, "NLL level used for flagging");
  flags.add_to(*detect);

  auto* plot = app.add_subcommand("plot-data", "CSV of history, forecast quantiles and truth for one series");
  plot->add_option("--data", data, "Dataset jsonlines")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, "Output CSV")->required();
  plot->add_option("--item", item, "item_id (default: first series)");
  plot->add_option("--history", history, "History steps to include (0: 3x prediction length)");
  flags.add_to(*plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "generate") return run_generate(spec, out);
    if (command == "train") return run_train(flags, data, out);
    if (command == "predict") return run_predict(model_dir, data, flags.freq, flags.pred_len, flags.quantiles, out);
    if (command == "backtest") {
      ExperimentConfig exp;
      if (!config_path.empty()) {
        exp = ExperimentConfig::from_config(read_config_log(config_path));
      } else {
        if (data.empty()) {
          std::cerr << "backtest: --data or --config is required\n";
          return 2;
        }
        exp.seed = flags.seed;
        exp.data = absolute(data);
        exp.freq = flags.freq;
        exp.estimator = flags.estimator_config();
        exp.split = SplitSpec{flags.pred_len, windows, stride};
        exp.split.stride = exp.split.effective_stride();
        exp.quantiles = flags.quantiles;
        exp.season_length = flags.season_length;
      }
      return run_backtest(exp, out);
    }
    if (command == "detect") {
      AnomalyConfig cfg;
      cfg.method = method == "cdf" ? AnomalyConfig::Method::cdf_pvalue : AnomalyConfig::Method::nll_percentile;
      cfg.threshold = threshold;
      cfg.levels = levels;
      cfg.flag_level = flag_level;
      cfg.validate();
      return run_detect(flags, data, out, cfg);
    }
    if (command == "plot-data") return run_plot_data(flags, data, item, history > 0 ? history : 3 * flags.pred_len, out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "probts " << command << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "probts " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 2;
}
