#include "taegcn/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "taegcn/checkpoint.hpp"
#include "taegcn/error.hpp"
#include "taegcn/gradcheck.hpp"
#include "taegcn/io.hpp"
#include "taegcn/synth.hpp"

namespace taegcn::cli {

namespace fs = std::filesystem;
using ad::Tensor;
using nlohmann::json;

data::WindowSet windows_for(const model::Forecaster& f, const data::SeriesDataset& part) {
  const auto& c = f.model.config();
  return data::WindowSet(part, f.norm, c.input_length, c.horizon, c.target_channel);
}

Experiment run_experiment(const config::RunConfig& cfg, const train::EpochCallback& on_epoch) {
  const data::SeriesDataset ds = data::load_csv(cfg.data.path, cfg.data.missing_marker);
  const data::Split split =
      data::chronological_split(ds, cfg.data.train_fraction, cfg.data.val_fraction, cfg.data.test_fraction);
  model::Forecaster f = model::Forecaster::from_training_data(cfg.model, cfg.variant, split.train);
  const auto train_w = windows_for(f, split.train);
  const auto val_w = windows_for(f, split.val);
  const auto test_w = windows_for(f, split.test);
  for (const auto& [name, w] : {std::pair{"train", &train_w}, {"val", &val_w}, {"test", &test_w}}) {
    if (w->empty()) {
      throw ConfigError(std::string(name) + " split of '" + cfg.data.path + "' is too short for input_length " +
                        std::to_string(cfg.model.input_length) + " + horizon " +
                        std::to_string(cfg.model.horizon));
    }
  }
  train::TrainHistory history = train::fit(f, train_w, val_w, cfg.train, on_epoch);
  const std::size_t threads = std::max(cfg.train.eval_threads, train::threads_from_env());
  train::MetricsReport test = train::evaluate(f, test_w, threads);
  train::MetricsReport persistence = train::evaluate_persistence(test_w);
  return Experiment{std::move(f), std::move(history), std::move(test), std::move(persistence)};
}

namespace {

struct Loaded {
  model::Forecaster forecaster;
  config::DataConfig data;
  data::SeriesDataset dataset;
};

Loaded load_inputs(const std::string& checkpoint_path, const std::string& data_path) {
  if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint '" + checkpoint_path + "' does not exist");
  if (!fs::exists(data_path)) throw ConfigError("data file '" + data_path + "' does not exist");
  config::DataConfig dcfg;
  model::Forecaster f = checkpoint::load(checkpoint_path, &dcfg);
  data::SeriesDataset ds = data::load_csv(data_path, f.missing_marker);
  if (ds.node_ids != f.node_ids) {
    throw ConfigError("data file '" + data_path + "' nodes do not match checkpoint '" + checkpoint_path + "'");
  }
  if (ds.channels() != f.model.config().input_channels) {
    throw ConfigError("data file '" + data_path + "' has " + std::to_string(ds.channels()) +
                      " channels, checkpoint expects " + std::to_string(f.model.config().input_channels));
  }
  return Loaded{std::move(f), dcfg, std::move(ds)};
}

std::vector<std::size_t> parse_nodes(const std::string& list, std::size_t nodes) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.empty()) throw ConfigError("--nodes: '" + item + "' is not an index");
    if (v < 0 || static_cast<std::size_t>(v) >= nodes) {
      throw ConfigError("--nodes: index " + item + " out of range [0, " + std::to_string(nodes) + ")");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--nodes: empty node list");
  return out;
}

int cmd_train(const std::string& config_path, const std::string& ablate, std::ostream& out, std::ostream& err) {
  config::RunConfig cfg = config::load_run_config(config_path);
  if (!ablate.empty()) cfg.variant = model::parse_variant(ablate);
  const fs::path dir(cfg.output.dir);
  fs::create_directories(dir);
  const auto progress = [&err](const train::EpochRecord& r) {
    err << "epoch=" << r.epoch << " steps=" << r.steps << " train_loss=" << io::format_double(r.train_loss)
        << " val_mae=" << io::format_double(r.val_mae) << " seconds=" << std::fixed << std::setprecision(3)
        << r.seconds << std::defaultfloat << "\n";
    err.flush();
  };
  Experiment ex = run_experiment(cfg, progress);
  config::RunConfig resolved = cfg;
  resolved.model = ex.forecaster.model.config();
  io::write_file_atomic(dir / "resolved_config.json", config::to_json(resolved).dump(2) + "\n");
  checkpoint::save(dir / "checkpoint.json", ex.forecaster, &cfg.data);
  io::write_file_atomic(dir / "history.json", config::to_json(ex.history).dump(2) + "\n");
  json metrics = config::to_json(ex.test);
  metrics["persistence"] = config::to_json(ex.persistence);
  metrics["variant"] = model::to_string(cfg.variant);
  io::write_file_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
  const std::string table = train::format_report(ex.test);
  io::write_file_atomic(dir / "metrics.txt", table);
  out << table;
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& json_out,
             std::ostream& out) {
  Loaded in = load_inputs(ckpt, data_path);
  const data::Split split = data::chronological_split(in.dataset, in.data.train_fraction, in.data.val_fraction,
                                                      in.data.test_fraction);
  const auto test_w = windows_for(in.forecaster, split.test);
  if (test_w.empty()) throw ConfigError("data file '" + data_path + "': test split has no windows");
  const train::MetricsReport report = train::evaluate(in.forecaster, test_w, train::threads_from_env());
  if (!json_out.empty()) io::write_file_atomic(json_out, config::to_json(report).dump(2) + "\n");
  out << train::format_report(report);
  return kExitOk;
}

int cmd_predict(const std::string& ckpt, const std::string& data_path, const std::string& out_path,
                std::ostream& out) {
  Loaded in = load_inputs(ckpt, data_path);
  const auto windows = windows_for(in.forecaster, in.dataset);
  if (windows.empty()) throw ConfigError("data file '" + data_path + "' is shorter than one window");
  const Tensor pred = train::predict_windows(in.forecaster, windows, train::threads_from_env());
  const std::size_t n = windows.nodes(), h = windows.horizon(), t_in = windows.input_length();
  std::ostringstream os;
  os << "origin_timestamp,node";
  for (std::size_t s = 1; s <= h; ++s) os << ",step_" << s;
  os << "\n";
  const auto v = pred.values();
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const std::int64_t origin = in.dataset.timestamps[windows.start(w) + t_in - 1];
    for (std::size_t i = 0; i < n; ++i) {
      os << origin << "," << in.dataset.node_ids[i];
      for (std::size_t s = 0; s < h; ++s) os << "," << io::format_double(v[(w * n + i) * h + s]);
      os << "\n";
    }
  }
  io::write_file_atomic(out_path, os.str());
  out << "wrote " << windows.size() << " windows to " << out_path << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  if (!fs::exists(spec_path)) throw ConfigError("spec file '" + spec_path + "' does not exist");
  synth::SynthSpec spec;
  try {
    spec = synth::spec_from_json(io::read_file(spec_path));
  } catch (const Error& e) {
    throw ConfigError(spec_path + ": " + e.what());
  }
  const synth::SynthResult result = synth::synth_generate(spec);
  synth::write_outputs(result, out_dir);
  out << "wrote " << spec.nodes << " nodes x " << spec.steps() << " steps, " << spec.regimes.size()
      << " regimes to " << out_dir << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  const auto results = gradcheck::run_suite(seed);
  bool ok = true;
  for (const auto& r : results) {
    out << std::left << std::setw(36) << r.name << " max_rel_error=" << std::scientific << std::setprecision(3)
        << r.max_rel_error << std::defaultfloat << " entries=" << r.entries << " "
        << (r.passed() ? "ok" : "FAIL") << "\n";
    ok = ok && r.passed();
  }
  out << (ok ? "all " : "not all ") << results.size() << " checks below " << gradcheck::kTolerance << "\n";
  return ok ? kExitOk : kExitNumeric;
}

int cmd_export(const std::string& ckpt, const std::string& data_path, const std::string& node_list,
               std::size_t window, const std::string& out_dir, std::ostream& out) {
  Loaded in = load_inputs(ckpt, data_path);
  const auto windows = windows_for(in.forecaster, in.dataset);
  if (window >= windows.size()) {
    throw ConfigError("--window " + std::to_string(window) + " out of range [0, " +
                      std::to_string(windows.size()) + ")");
  }
  const auto nodes = parse_nodes(node_list, windows.nodes());
  model::TaegcnModel::Output o;
  {
    ad::NoGradGuard no_grad;
    o = in.forecaster.model.forward_detailed(windows.inputs({window}), in.forecaster.static_features);
  }
  const auto& graphs = o.graphs.back();
  std::vector<std::string> ids;
  for (std::size_t i : nodes) ids.push_back(in.forecaster.node_ids[i]);
  fs::create_directories(out_dir);
  const std::size_t n = windows.nodes();
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const auto a = graphs.periods[m].values();
    std::vector<double> sub;
    for (std::size_t i : nodes) {
      for (std::size_t j : nodes) sub.push_back(a[i * n + j]);
    }
    const Tensor matrix = Tensor::from({nodes.size(), nodes.size()}, std::move(sub));
    io::write_file_atomic(fs::path(out_dir) / ("A_period_" + std::to_string(m + 1) + ".csv"),
                          synth::adjacency_csv(matrix, ids));
  }
  out << "wrote " << graphs.size() << " period matrices to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal forecasting with evolving graphs", "taegcn"};
  app.require_subcommand(1);

  std::string config_path, ablate;
  auto* train = app.add_subcommand("train", "Fit a model from a run config");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--ablate", ablate, "Ablation variant")->check(CLI::IsMember({"tmsa", "egc"}));

  std::string ckpt, data_path, out_path, json_out;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the test split of a dataset");
  eval->add_option("--checkpoint", ckpt, "Checkpoint JSON")->required();
  eval->add_option("--data", data_path, "Series CSV")->required();
  eval->add_option("--json", json_out, "Also write the report as JSON");

  auto* predict = app.add_subcommand("predict", "Forecast every window of a dataset");
  predict->add_option("--checkpoint", ckpt, "Checkpoint JSON")->required();
  predict->add_option("--data", data_path, "Series CSV")->required();
  predict->add_option("--out", out_path, "Output CSV")->required();

  std::string spec_path;
  auto* synth = app.add_subcommand("synth", "Generate a regime-switching synthetic dataset");
  synth->add_option("--spec", spec_path, "Synth spec JSON")->required();
  synth->add_option("--out", out_path, "Output directory")->required();

  std::uint64_t seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--seed", seed, "Seed for random inputs");

  std::string nodes;
  std::size_t window = 0;
  auto* exp = app.add_subcommand("export-adjacency", "Write final-layer adjacency per period as CSV");
  exp->add_option("--checkpoint", ckpt, "Checkpoint JSON")->required();
  exp->add_option("--data", data_path, "Series CSV")->required();
  exp->add_option("--nodes", nodes, "Comma-separated node indices")->required();
  exp->add_option("--window", window, "Window index")->required();
  exp->add_option("--out", out_path, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(config_path, ablate, out, err);
    if (*eval) return cmd_eval(ckpt, data_path, json_out, out);
    if (*predict) return cmd_predict(ckpt, data_path, out_path, out);
    if (*synth) return cmd_synth(spec_path, out_path, out);
    if (*grad) return cmd_gradcheck(seed, out);
    if (*exp) return cmd_export(ckpt, data_path, nodes, window, out_path, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace taegcn::cli
