#include "taegcn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "taegcn/error.hpp"

namespace taegcn::train {

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr > 0)) fail("lr must be positive");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (clip_norm < 0) fail("clip_norm must be >= 0");
  if (eval_threads == 0) fail("eval_threads must be >= 1");
}

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch ||
      total_steps != other.total_steps) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_mae != b.val_mae || a.steps != b.steps) {
      return false;
    }
  }
  return true;
}

MetricsReport compute_metrics(const Tensor& prediction, const Tensor& target, double missing_marker) {
  if (prediction.shape() != target.shape() || prediction.rank() != 3) {
    throw DimensionError("compute_metrics: expected matching [W,N,H], got " +
                         ad::to_string(prediction.shape()) + " and " + ad::to_string(target.shape()));
  }
  const std::size_t w = prediction.size(0), n = prediction.size(1), h = prediction.size(2);
  struct Acc {
    double abs = 0, sq = 0, pct = 0;
    std::size_t count = 0, pct_count = 0;
  };
  std::vector<Acc> per(h);
  Acc total;
  const auto p = prediction.values();
  const auto y = target.values();
  for (std::size_t k = 0; k < w; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < h; ++s) {
        const std::size_t idx = (k * n + i) * h + s;
        if (y[idx] == missing_marker) continue;
        const double e = p[idx] - y[idx];
        for (Acc* a : {&per[s], &total}) {
          a->abs += std::fabs(e);
          a->sq += e * e;
          ++a->count;
          if (y[idx] != 0.0) {
            a->pct += std::fabs(e) / std::fabs(y[idx]);
            ++a->pct_count;
          }
        }
      }
    }
  }
  if (total.count == 0) throw ContractError("evaluate: no unmasked targets to score");
  const auto finish = [](const Acc& a, std::size_t step) {
    HorizonMetrics m;
    m.step = step;
    m.count = a.count;
    m.mape_count = a.pct_count;
    if (a.count > 0) {
      m.mae = a.abs / static_cast<double>(a.count);
      m.rmse = std::sqrt(a.sq / static_cast<double>(a.count));
    }
    if (a.pct_count > 0) m.mape = 100.0 * a.pct / static_cast<double>(a.pct_count);
    return m;
  };
  MetricsReport report;
  report.windows = w;
  for (std::size_t s = 0; s < h; ++s) report.per_horizon.push_back(finish(per[s], s + 1));
  report.aggregate = finish(total, 0);
  return report;
}

Tensor predict_windows(const model::Forecaster& forecaster, const data::WindowSet& windows,
                       std::size_t threads, std::size_t batch_size) {
  const std::size_t w = windows.size();
  const std::size_t n = windows.nodes();
  const std::size_t h = forecaster.model.config().horizon;
  if (windows.horizon() != h) {
    throw ConfigError("window horizon " + std::to_string(windows.horizon()) +
                      " does not match model horizon " + std::to_string(h));
  }
  std::vector<double> out(w * n * h);
  const std::size_t batches = (w + batch_size - 1) / batch_size;
  const auto run = [&](std::size_t worker, std::size_t stride) {
    ad::NoGradGuard no_grad;
    for (std::size_t b = worker; b < batches; b += stride) {
      std::vector<std::size_t> idx;
      for (std::size_t k = b * batch_size; k < std::min(w, (b + 1) * batch_size); ++k) idx.push_back(k);
      const Tensor pred = forecaster.predict(windows.inputs(idx));
      const auto v = pred.values();
      std::copy(v.begin(), v.end(), out.begin() + idx.front() * n * h);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, batches));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& t : pool) t.join();
  }
  return Tensor::from({w, n, h}, std::move(out));
}

namespace {

Tensor all_targets(const data::WindowSet& windows) {
  std::vector<std::size_t> idx(windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  return windows.targets(idx);
}

}  // namespace

MetricsReport evaluate(const model::Forecaster& forecaster, const data::WindowSet& windows,
                       std::size_t threads) {
  if (windows.empty()) throw ContractError("evaluate: empty window set");
  return compute_metrics(predict_windows(forecaster, windows, threads), all_targets(windows),
                         windows.missing_marker());
}

MetricsReport evaluate_persistence(const data::WindowSet& windows) {
  if (windows.empty()) throw ContractError("evaluate_persistence: empty window set");
  std::vector<std::size_t> idx(windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor last = windows.last_observed(idx);
  const std::size_t h = windows.horizon();
  std::vector<double> pred(last.numel() * h);
  for (std::size_t i = 0; i < last.numel(); ++i) {
    for (std::size_t s = 0; s < h; ++s) pred[i * h + s] = last.values()[i];
  }
  return compute_metrics(Tensor::from({windows.size(), windows.nodes(), h}, std::move(pred)),
                         windows.targets(idx), windows.missing_marker());
}

TrainHistory fit(model::Forecaster& forecaster, const data::WindowSet& train_windows,
                 const data::WindowSet& val_windows, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  config.validate();
  if (train_windows.empty() || val_windows.empty()) throw ContractError("fit: empty window set");
  auto& store = forecaster.model.parameters();
  ad::AdamState adam(ad::AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  history.best_val_mae = std::numeric_limits<double>::infinity();
  auto best = store.snapshot();
  std::size_t stale = 0;
  std::size_t batch_counter = 0;
  bool capped = false;
  store.zero_grad();

  for (std::size_t epoch = 1; epoch <= config.epochs && !capped; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (config.shuffle) {
      for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng() % (i + 1)]);
    }
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    std::size_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), begin + config.batch_size)));
      const Tensor pred = forecaster.predict(train_windows.inputs(idx));
      const model::MaskedLoss loss = model::masked_mae_loss(pred, train_windows.targets(idx),
                                                            train_windows.missing_marker());
      const double value = loss.loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_counter),
                              batch_counter);
      }
      ++batch_counter;
      if (loss.all_masked) continue;
      ad::backward(loss.loss);
      if (config.clip_norm > 0) ad::clip_grad_norm(store, config.clip_norm);
      ad::adam_step(store, adam);
      loss_sum += value;
      ++loss_batches;
      ++epoch_steps;
      ++history.total_steps;
      if (config.max_steps > 0 && history.total_steps >= config.max_steps) {
        capped = true;
        break;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = epoch_steps;
    rec.train_loss = loss_batches > 0 ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    rec.val_mae = evaluate(forecaster, val_windows, config.eval_threads).aggregate.mae;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_mae < history.best_val_mae) {
      history.best_val_mae = rec.val_mae;
      history.best_epoch = epoch;
      best = store.snapshot();
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }
  store.restore(best);
  return history;
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("TAEGCN_THREADS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1) return 1;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<std::size_t>(std::min<long>(v, hw));
}

std::string format_report(const MetricsReport& report, double minutes_per_step) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-9s %8s %10s %10s %9s %9s\n", "horizon", "minutes", "MAE", "RMSE",
                "MAPE(%)", "count");
  os << line;
  const auto row = [&](const HorizonMetrics& m, const std::string& label, const std::string& minutes) {
    std::snprintf(line, sizeof line, "%-9s %8s %10.4f %10.4f %9.3f %9zu\n", label.c_str(),
                  minutes.c_str(), m.mae, m.rmse, m.mape, m.count);
    os << line;
  };
  for (const auto& m : report.per_horizon) {
    char minutes[32];
    std::snprintf(minutes, sizeof minutes, "%g", minutes_per_step * static_cast<double>(m.step));
    row(m, std::to_string(m.step), minutes);
  }
  row(report.aggregate, "all", "-");
  return os.str();
}

}  // namespace taegcn::train
