#include "taegcn/model.hpp"

#include "taegcn/error.hpp"

namespace taegcn::model {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kAblateTmsa: return "ablate_tmsa";
    case Variant::kAblateEgc: return "ablate_egc";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "ablate_tmsa" || name == "tmsa") return Variant::kAblateTmsa;
  if (name == "ablate_egc" || name == "egc") return Variant::kAblateEgc;
  throw ConfigError("unknown model variant '" + name + "' (expected full, ablate_tmsa or ablate_egc)");
}

std::string to_string(WindowMode m) { return m == WindowMode::kPerHead ? "per_head" : "per_layer"; }

WindowMode parse_window_mode(const std::string& name) {
  if (name == "per_layer") return WindowMode::kPerLayer;
  if (name == "per_head") return WindowMode::kPerHead;
  throw ConfigError("unknown window mode '" + name + "' (expected per_layer or per_head)");
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (layers == 0) fail("layers must be >= 1");
  if (heads == 0) fail("heads must be >= 1");
  if (hidden == 0 || hidden % heads != 0) {
    fail("hidden (" + std::to_string(hidden) + ") must be a positive multiple of heads (" +
         std::to_string(heads) + ")");
  }
  const std::size_t expected = window_mode == WindowMode::kPerLayer ? layers : heads;
  if (windows.size() != expected) {
    fail("window schedule has " + std::to_string(windows.size()) + " entries, expected " +
         std::to_string(expected) + " (" + to_string(window_mode) + ")");
  }
  for (std::size_t w : windows) {
    if (w == 0) fail("window sizes must be >= 1");
  }
  if (state_dim == 0) fail("state_dim must be >= 1");
  if (period == 0) fail("period must be >= 1");
  if (input_length == 0 || input_length % period != 0) {
    fail("input_length (" + std::to_string(input_length) + ") must be a positive multiple of period (" +
         std::to_string(period) + ")");
  }
  if (horizon == 0) fail("horizon must be >= 1");
  if (skip == 0 || head_hidden == 0) fail("skip and head_hidden must be >= 1");
  if (input_channels == 0) fail("input_channels must be >= 1");
  if (target_channel >= input_channels) {
    fail("target_channel " + std::to_string(target_channel) + " out of range for " +
         std::to_string(input_channels) + " input channels");
  }
}

std::size_t ModelConfig::window(std::size_t layer, std::size_t head) const {
  return window_mode == WindowMode::kPerLayer ? windows.at(layer) : windows.at(head);
}

Tensor tcn_forward(const Tensor& z, const TcnParams& p) {
  if (z.rank() != 4 || z.size(3) != p.w_now.size(0)) {
    throw DimensionError("tcn_forward: expected [B,N,T," + std::to_string(p.w_now.size(0)) +
                         "], got " + ad::to_string(z.shape()));
  }
  const Tensor now = ad::matmul(z, p.w_now);
  const Tensor past = ad::matmul(ad::shift(z, 2, p.dilation), p.w_past);
  return ad::relu(ad::add(ad::add(now, past), p.b));
}

TaegcnModel::TaegcnModel(ModelConfig config, Variant variant)
    : config_(std::move(config)), variant_(variant) {
  config_.validate();
  const ModelConfig& c = config_;
  const std::uint64_t seed = c.seed;
  const std::size_t static_dim = egc::kStatsPerChannel * c.input_channels;

  w_in_ = store_.add_uniform("input.w", {c.input_channels, c.hidden}, c.input_channels, seed);
  b_in_ = store_.add("input.b", {c.hidden});
  state_init_ = egc::StateInitParams::create(store_, "state_init", static_dim, c.state_dim, seed);

  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    Layer layer;
    if (variant_ == Variant::kAblateTmsa) {
      layer.tcn.w_now = store_.add_uniform(prefix + ".tcn.w_now", {c.hidden, c.hidden}, 2 * c.hidden, seed);
      layer.tcn.w_past = store_.add_uniform(prefix + ".tcn.w_past", {c.hidden, c.hidden}, 2 * c.hidden, seed);
      layer.tcn.b = store_.add(prefix + ".tcn.b", {c.hidden});
      layer.tcn.dilation = c.window(l, 0);
    } else {
      std::vector<std::size_t> head_windows;
      for (std::size_t h = 0; h < c.heads; ++h) head_windows.push_back(c.window(l, h));
      layer.attention = tmsa::TmsaLayerParams::create(store_, prefix + ".tmsa", c.hidden, c.heads,
                                                      std::move(head_windows), seed);
    }
    if (variant_ != Variant::kAblateEgc) {
      layer.gru = egc::GruParams::create(store_, prefix + ".egc.gru", c.hidden, c.state_dim, seed);
    }
    layer.scorer = egc::PairScorerParams::create(store_, prefix + ".egc.scorer", c.state_dim, seed);
    layer.gcn = gcn::GcnParams::create(store_, prefix + ".gcn", c.hidden, c.hidden, seed);
    layer.w_skip = store_.add_uniform(prefix + ".skip.w", {c.hidden, c.skip}, c.hidden, seed);
    layer.b_skip = store_.add(prefix + ".skip.b", {c.skip});
    layers_.push_back(std::move(layer));
  }
  w_h1_ = store_.add_uniform("head.w1", {c.skip, c.head_hidden}, c.skip, seed);
  b_h1_ = store_.add("head.b1", {c.head_hidden});
  w_h2_ = store_.add_uniform("head.w2", {c.head_hidden, c.horizon}, c.head_hidden, seed);
  b_h2_ = store_.add("head.b2", {c.horizon});
}

std::size_t TaegcnModel::expected_parameter_count(const ModelConfig& c, Variant variant) {
  const std::size_t C = c.hidden;
  const std::size_t static_dim = egc::kStatsPerChannel * c.input_channels;
  std::size_t n = c.input_channels * C + C;
  n += static_dim * c.state_dim + c.state_dim;
  for (std::size_t l = 0; l < c.layers; ++l) {
    n += variant == Variant::kAblateTmsa ? 2 * C * C + C : tmsa::TmsaLayerParams::parameter_count(C, c.heads);
    if (variant != Variant::kAblateEgc) n += egc::GruParams::parameter_count(C, c.state_dim);
    n += egc::PairScorerParams::parameter_count(c.state_dim);
    n += gcn::GcnParams::parameter_count(C, C);
    n += C * c.skip + c.skip;
  }
  n += c.skip * c.head_hidden + c.head_hidden + c.head_hidden * c.horizon + c.horizon;
  return n;
}

TaegcnModel::Output TaegcnModel::forward_detailed(const Tensor& x, const Tensor& static_features) const {
  const ModelConfig& c = config_;
  if (x.rank() != 4 || x.size(2) != c.input_length || x.size(3) != c.input_channels) {
    throw DimensionError("model_forward: expected [B,N," + std::to_string(c.input_length) + "," +
                         std::to_string(c.input_channels) + "], got " + ad::to_string(x.shape()));
  }
  const std::size_t batch = x.size(0);
  const std::size_t nodes = x.size(1);
  if (static_features.rank() != 2 || static_features.size(0) != nodes) {
    throw DimensionError("model_forward: static features " + ad::to_string(static_features.shape()) +
                         " do not cover " + std::to_string(nodes) + " nodes");
  }
  Output out;
  out.initial_state = egc::init_state(static_features, state_init_);
  Tensor z = ad::add(ad::matmul(x, w_in_), b_in_);
  Tensor skip_sum;
  const std::size_t t = c.input_length;
  for (const Layer& layer : layers_) {
    const Tensor xi = variant_ == Variant::kAblateTmsa ? tcn_forward(z, layer.tcn)
                                                       : tmsa::tmsa_forward(z, layer.attention);
    egc::AdjacencySequence graphs =
        variant_ == Variant::kAblateEgc
            ? egc::static_sequence(out.initial_state, layer.scorer, batch, t, c.period)
            : egc::evolve_sequence(xi, out.initial_state, layer.gru, layer.scorer, c.period);
    z = gcn::gcn_forward(xi, graphs, layer.gcn);
    // Skip taken from the layer output so every layer's graph reaches the head.
    const Tensor last = ad::reshape(ad::slice(z, 2, t - 1, t), {batch, nodes, c.hidden});
    const Tensor s = ad::add(ad::matmul(last, layer.w_skip), layer.b_skip);
    skip_sum = skip_sum.defined() ? ad::add(skip_sum, s) : s;
    out.graphs.push_back(std::move(graphs));
  }
  const Tensor h = ad::relu(ad::add(ad::matmul(ad::relu(skip_sum), w_h1_), b_h1_));
  out.prediction = ad::add(ad::matmul(h, w_h2_), b_h2_);
  return out;
}

Tensor TaegcnModel::forward(const Tensor& x, const Tensor& static_features) const {
  return forward_detailed(x, static_features).prediction;
}

MaskedLoss masked_mae_loss(const Tensor& prediction, const Tensor& target, double missing_marker) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("masked_mae_loss: prediction " + ad::to_string(prediction.shape()) +
                         " vs target " + ad::to_string(target.shape()));
  }
  std::vector<double> mask(target.numel());
  std::size_t count = 0;
  const auto y = target.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask[i] = y[i] != missing_marker ? 1.0 : 0.0;
    count += y[i] != missing_marker ? 1 : 0;
  }
  MaskedLoss out;
  out.count = count;
  if (count == 0) {
    out.loss = Tensor::scalar(0.0);
    out.all_masked = true;
    return out;
  }
  const Tensor m = Tensor::from(target.shape(), std::move(mask));
  out.loss = ad::scale(ad::sum(ad::mul(ad::abs(ad::sub(prediction, target)), m)),
                       1.0 / static_cast<double>(count));
  return out;
}

Forecaster Forecaster::from_training_data(const ModelConfig& config, Variant variant,
                                          const data::SeriesDataset& train) {
  ModelConfig c = config;
  c.input_channels = train.channels();
  data::NormStats norm = data::compute_norm_stats(train);
  Tensor statics = egc::standardize_columns(egc::extract_static_features(data::normalize(train, norm)).values);
  return Forecaster{TaegcnModel(c, variant), std::move(norm), std::move(statics), train.node_ids,
                    train.missing_marker};
}

Tensor Forecaster::denormalize_target(const Tensor& normalized) const {
  const std::size_t ch = model.config().target_channel;
  return ad::add_scalar(ad::scale(normalized, norm.std.at(ch)), norm.mean.at(ch));
}

Tensor Forecaster::predict(const Tensor& x) const {
  return denormalize_target(model.forward(x, static_features));
}

}  // namespace taegcn::model
