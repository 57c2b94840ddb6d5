#include "taegcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "taegcn/error.hpp"
#include "taegcn/io.hpp"

namespace taegcn::data {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "nan" || s == "NaN" || s == "NAN" || s == "NA" || s == "null";
}

}  // namespace

SeriesDataset SeriesDataset::from_values(Tensor values, std::vector<std::string> node_ids,
                                         std::vector<std::int64_t> timestamps,
                                         double missing_marker) {
  if (values.rank() != 3) {
    throw DimensionError("SeriesDataset: values must be [N,T,C], got " + ad::to_string(values.shape()));
  }
  SeriesDataset ds;
  const std::size_t n = values.size(0);
  const std::size_t t = values.size(1);
  if (node_ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) node_ids.push_back("n" + std::to_string(i));
  }
  if (timestamps.empty()) {
    for (std::size_t i = 0; i < t; ++i) timestamps.push_back(static_cast<std::int64_t>(300 * i));
  }
  ds.missing.resize(values.numel());
  const auto v = values.values();
  for (std::size_t i = 0; i < v.size(); ++i) ds.missing[i] = v[i] == missing_marker ? 1 : 0;
  ds.values = values.detach();
  ds.node_ids = std::move(node_ids);
  ds.timestamps = std::move(timestamps);
  ds.missing_marker = missing_marker;
  ds.validate();
  return ds;
}

void SeriesDataset::validate() const {
  if (!values.defined() || values.rank() != 3) throw ContractError("SeriesDataset: values must be [N,T,C]");
  if (nodes() == 0 || steps() == 0 || channels() == 0) {
    throw ContractError("SeriesDataset: N, T and C must all be >= 1");
  }
  if (node_ids.size() != nodes()) throw ContractError("SeriesDataset: node id count does not match N");
  if (timestamps.size() != steps()) throw ContractError("SeriesDataset: timestamp count does not match T");
  if (missing.size() != values.numel()) throw ContractError("SeriesDataset: missing mask has wrong size");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw ContractError("SeriesDataset: timestamps not strictly increasing at " +
                          std::to_string(timestamps[i]));
    }
  }
  std::set<std::string> ids(node_ids.begin(), node_ids.end());
  if (ids.size() != node_ids.size()) throw ContractError("SeriesDataset: node ids are not unique");
}

SeriesDataset SeriesDataset::slice_steps(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > steps()) {
    throw ContractError("slice_steps: invalid range [" + std::to_string(begin) + "," +
                        std::to_string(end) + ")");
  }
  const std::size_t n = nodes(), c = channels(), len = end - begin;
  std::vector<double> v(n * len * c);
  SeriesDataset out;
  out.missing.resize(v.size());
  const auto src = values.values();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t from = (i * steps() + begin) * c;
    std::copy(src.begin() + from, src.begin() + from + len * c, v.begin() + i * len * c);
    std::copy(missing.begin() + from, missing.begin() + from + len * c, out.missing.begin() + i * len * c);
  }
  out.values = Tensor::from({n, len, c}, std::move(v));
  out.node_ids = node_ids;
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  out.missing_marker = missing_marker;
  return out;
}

SeriesDataset SeriesDataset::permute_nodes(const std::vector<std::size_t>& order) const {
  if (order.size() != nodes()) throw ContractError("permute_nodes: order has wrong length");
  const std::size_t row = steps() * channels();
  std::vector<double> v(values.numel());
  SeriesDataset out;
  out.missing.resize(v.size());
  const auto src = values.values();
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] >= nodes()) throw ContractError("permute_nodes: index out of range");
    std::copy(src.begin() + order[k] * row, src.begin() + (order[k] + 1) * row, v.begin() + k * row);
    std::copy(missing.begin() + order[k] * row, missing.begin() + (order[k] + 1) * row,
              out.missing.begin() + k * row);
    out.node_ids.push_back(node_ids[order[k]]);
  }
  out.values = Tensor::from(values.shape(), std::move(v));
  out.timestamps = timestamps;
  out.missing_marker = missing_marker;
  out.validate();
  return out;
}

SeriesDataset parse_csv(const std::string& text, double missing_marker, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    header = split_fields(line);
    break;
  }
  if (header.empty()) throw ParseError(source + ": missing header");
  if (trim(header[0]) != "timestamp") {
    throw ParseError(source + ": line " + std::to_string(line_no) +
                     ": first column must be 'timestamp', found '" + header[0] + "'");
  }

  // Column k+1 -> (node, channel).
  std::vector<std::string> node_ids;
  std::map<std::string, std::size_t> node_index;
  std::vector<std::pair<std::size_t, std::size_t>> column_slot;
  std::map<std::size_t, std::set<std::size_t>> node_channels;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const std::string name = trim(header[k]);
    const auto pos = name.rfind("_channel");
    std::size_t channel = 0;
    bool ok = pos != std::string::npos && pos > 0 && pos + 8 < name.size();
    if (ok) {
      const char* first = name.data() + pos + 8;
      const char* last = name.data() + name.size();
      auto [ptr, ec] = std::from_chars(first, last, channel);
      ok = ec == std::errc() && ptr == last;
    }
    if (!ok) {
      throw ParseError(source + ": line " + std::to_string(line_no) + ": column '" + name +
                       "' does not match <node>_channel<K>");
    }
    const std::string node = name.substr(0, pos);
    auto [it, inserted] = node_index.emplace(node, node_ids.size());
    if (inserted) node_ids.push_back(node);
    if (!node_channels[it->second].insert(channel).second) {
      throw ParseError(source + ": duplicate column '" + name + "'");
    }
    column_slot.emplace_back(it->second, channel);
  }
  if (node_ids.empty()) throw ParseError(source + ": header has no data columns");
  const std::size_t channels = node_channels.begin()->second.size();
  for (const auto& [node, chans] : node_channels) {
    if (chans.size() != channels || *chans.rbegin() != channels - 1) {
      throw ParseError(source + ": node '" + node_ids[node] + "' must provide channels 0.." +
                       std::to_string(channels - 1));
    }
  }

  struct Row {
    std::int64_t timestamp;
    std::vector<double> cells;  // in column order
    std::vector<std::uint8_t> missing;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(source + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    Row row;
    {
      const std::string ts = trim(fields[0]);
      auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), row.timestamp);
      if (ec != std::errc() || ptr != ts.data() + ts.size()) {
        throw ParseError(source + ": line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
      }
    }
    row.cells.resize(header.size() - 1);
    row.missing.resize(header.size() - 1);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const std::string cell = trim(fields[k]);
      if (is_missing_token(cell)) {
        row.cells[k - 1] = missing_marker;
        row.missing[k - 1] = 1;
        continue;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(source + ": line " + std::to_string(line_no) + ", column " +
                         std::to_string(k + 1) + ": cannot parse number '" + cell + "'");
      }
      row.cells[k - 1] = v;
      row.missing[k - 1] = v == missing_marker ? 1 : 0;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source + ": no rows");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].timestamp == rows[i - 1].timestamp) {
      throw ParseError(source + ": duplicate timestamp " + std::to_string(rows[i].timestamp));
    }
  }

  const std::size_t n = node_ids.size(), t = rows.size();
  std::vector<double> v(n * t * channels);
  SeriesDataset ds;
  ds.missing.resize(v.size());
  for (std::size_t r = 0; r < t; ++r) {
    ds.timestamps.push_back(rows[r].timestamp);
    for (std::size_t k = 0; k < column_slot.size(); ++k) {
      const auto [node, ch] = column_slot[k];
      const std::size_t idx = (node * t + r) * channels + ch;
      v[idx] = rows[r].cells[k];
      ds.missing[idx] = rows[r].missing[k];
    }
  }
  ds.values = Tensor::from({n, t, channels}, std::move(v));
  ds.node_ids = std::move(node_ids);
  ds.missing_marker = missing_marker;
  ds.validate();
  return ds;
}

SeriesDataset load_csv(const std::filesystem::path& path, double missing_marker) {
  return parse_csv(io::read_file(path), missing_marker, path.string());
}

std::string to_csv(const SeriesDataset& ds) {
  std::ostringstream os;
  os << "timestamp";
  for (const auto& id : ds.node_ids) {
    for (std::size_t c = 0; c < ds.channels(); ++c) os << ',' << id << "_channel" << c;
  }
  os << '\n';
  for (std::size_t t = 0; t < ds.steps(); ++t) {
    os << ds.timestamps[t];
    for (std::size_t n = 0; n < ds.nodes(); ++n) {
      for (std::size_t c = 0; c < ds.channels(); ++c) {
        os << ',';
        if (ds.is_missing(n, t, c)) {
          os << io::format_double(ds.missing_marker);
        } else {
          os << io::format_double(ds.at(n, t, c));
        }
      }
    }
    os << '\n';
  }
  return os.str();
}

void write_csv(const std::filesystem::path& path, const SeriesDataset& ds) {
  io::write_file_atomic(path, to_csv(ds));
}

SplitLengths split_lengths(std::size_t steps, double train, double val, double test) {
  if (train < 0 || val < 0 || test < 0 || std::fabs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const double t = static_cast<double>(steps);
  SplitLengths s;
  s.train = static_cast<std::size_t>(std::floor(train * t + 1e-9));
  s.val = static_cast<std::size_t>(std::floor(val * t + 1e-9));
  if (s.train + s.val > steps) throw ConfigError("split fractions exceed the series length");
  s.test = steps - s.train - s.val;
  if (s.train == 0 || s.val == 0 || s.test == 0) {
    throw ConfigError("split of " + std::to_string(steps) + " steps leaves an empty part (" +
                      std::to_string(s.train) + "/" + std::to_string(s.val) + "/" +
                      std::to_string(s.test) + ")");
  }
  return s;
}

Split chronological_split(const SeriesDataset& ds, double train, double val, double test) {
  const SplitLengths s = split_lengths(ds.steps(), train, val, test);
  return Split{ds.slice_steps(0, s.train), ds.slice_steps(s.train, s.train + s.val),
               ds.slice_steps(s.train + s.val, ds.steps())};
}

NormStats compute_norm_stats(const SeriesDataset& train) {
  const std::size_t c = train.channels();
  NormStats stats;
  stats.mean.assign(c, 0.0);
  stats.std.assign(c, 1.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < train.nodes(); ++n) {
      for (std::size_t t = 0; t < train.steps(); ++t) {
        if (!train.is_missing(n, t, ch)) {
          total += train.at(n, t, ch);
          ++count;
        }
      }
    }
    if (count == 0) continue;
    const double mu = total / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < train.nodes(); ++n) {
      for (std::size_t t = 0; t < train.steps(); ++t) {
        if (!train.is_missing(n, t, ch)) {
          const double d = train.at(n, t, ch) - mu;
          sq += d * d;
        }
      }
    }
    stats.mean[ch] = mu;
    stats.std[ch] = std::max(std::sqrt(sq / static_cast<double>(count)), NormStats::kMinStd);
  }
  return stats;
}

namespace {

template <typename F>
SeriesDataset map_present(const SeriesDataset& ds, const NormStats& stats, F f) {
  if (stats.mean.size() != ds.channels() || stats.std.size() != ds.channels()) {
    throw DimensionError("normalization stats have " + std::to_string(stats.mean.size()) +
                         " channels, dataset has " + std::to_string(ds.channels()));
  }
  SeriesDataset out = ds;
  out.values = ds.values.detach();
  auto v = out.values.mutable_values();
  const std::size_t c = ds.channels();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!ds.missing[i]) v[i] = f(v[i], stats.mean[i % c], stats.std[i % c]);
  }
  return out;
}

}  // namespace

SeriesDataset normalize(const SeriesDataset& ds, const NormStats& stats) {
  return map_present(ds, stats, [](double x, double m, double s) { return (x - m) / s; });
}

SeriesDataset denormalize(const SeriesDataset& ds, const NormStats& stats) {
  return map_present(ds, stats, [](double x, double m, double s) { return x * s + m; });
}

WindowSet::WindowSet(const SeriesDataset& raw, const NormStats& stats, std::size_t input_length,
                     std::size_t horizon, std::size_t target_channel)
    : nodes_(raw.nodes()),
      steps_(raw.steps()),
      channels_(raw.channels()),
      input_length_(input_length),
      horizon_(horizon),
      target_(target_channel),
      missing_marker_(raw.missing_marker) {
  if (input_length == 0 || horizon == 0) throw ConfigError("windows need input length and horizon >= 1");
  if (target_channel >= raw.channels()) {
    throw ConfigError("target channel " + std::to_string(target_channel) + " out of range (" +
                      std::to_string(raw.channels()) + " channels)");
  }
  if (raw.steps() < input_length + horizon) {
    throw ConfigError("series of " + std::to_string(raw.steps()) + " steps is too short for input length " +
                      std::to_string(input_length) + " plus horizon " + std::to_string(horizon));
  }
  count_ = raw.steps() - input_length - horizon + 1;
  SeriesDataset norm = normalize(raw, stats);
  std::vector<double> nv(norm.values.values().begin(), norm.values.values().end());
  // Missing inputs sit at the channel mean in normalized space.
  for (std::size_t i = 0; i < nv.size(); ++i) {
    if (raw.missing[i]) nv[i] = 0.0;
  }
  normalized_ = std::make_shared<const std::vector<double>>(std::move(nv));
  raw_ = std::make_shared<const std::vector<double>>(raw.values.values().begin(), raw.values.values().end());
  missing_ = std::make_shared<const std::vector<std::uint8_t>>(raw.missing);
}

Tensor WindowSet::inputs(const std::vector<std::size_t>& windows) const {
  const std::size_t b = windows.size();
  std::vector<double> out(b * nodes_ * input_length_ * channels_);
  const std::size_t block = input_length_ * channels_;
  for (std::size_t k = 0; k < b; ++k) {
    if (windows[k] >= count_) throw ContractError("window index out of range");
    for (std::size_t n = 0; n < nodes_; ++n) {
      const std::size_t from = (n * steps_ + windows[k]) * channels_;
      std::copy(normalized_->begin() + from, normalized_->begin() + from + block,
                out.begin() + (k * nodes_ + n) * block);
    }
  }
  return Tensor::from({b, nodes_, input_length_, channels_}, std::move(out));
}

Tensor WindowSet::targets(const std::vector<std::size_t>& windows) const {
  const std::size_t b = windows.size();
  std::vector<double> out(b * nodes_ * horizon_);
  for (std::size_t k = 0; k < b; ++k) {
    if (windows[k] >= count_) throw ContractError("window index out of range");
    for (std::size_t n = 0; n < nodes_; ++n) {
      for (std::size_t h = 0; h < horizon_; ++h) {
        const std::size_t t = windows[k] + input_length_ + h;
        const std::size_t idx = (n * steps_ + t) * channels_ + target_;
        out[(k * nodes_ + n) * horizon_ + h] = (*missing_)[idx] ? missing_marker_ : (*raw_)[idx];
      }
    }
  }
  return Tensor::from({b, nodes_, horizon_}, std::move(out));
}

Tensor WindowSet::last_observed(const std::vector<std::size_t>& windows) const {
  const std::size_t b = windows.size();
  std::vector<double> out(b * nodes_, missing_marker_);
  for (std::size_t k = 0; k < b; ++k) {
    if (windows[k] >= count_) throw ContractError("window index out of range");
    for (std::size_t n = 0; n < nodes_; ++n) {
      for (std::size_t j = input_length_; j-- > 0;) {
        const std::size_t idx = (n * steps_ + windows[k] + j) * channels_ + target_;
        if (!(*missing_)[idx]) {
          out[k * nodes_ + n] = (*raw_)[idx];
          break;
        }
      }
    }
  }
  return Tensor::from({b, nodes_}, std::move(out));
}

WindowSet make_windows(const SeriesDataset& ds, std::size_t input_length, std::size_t horizon,
                       std::size_t target_channel, const std::optional<NormStats>& stats) {
  NormStats identity;
  if (!stats) {
    identity.mean.assign(ds.channels(), 0.0);
    identity.std.assign(ds.channels(), 1.0);
  }
  return WindowSet(ds, stats ? *stats : identity, input_length, horizon, target_channel);
}

}  // namespace taegcn::data
