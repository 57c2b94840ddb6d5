#pragma once

// Multivariate series ingestion, chronological splitting, z-score
// normalization and sliding-window extraction.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"

namespace taegcn::data {

using ad::Tensor;

/// Observation cube [N nodes, T steps, C channels].
struct SeriesDataset {
  Tensor values;  // [N, T, C]
  std::vector<std::string> node_ids;
  std::vector<std::int64_t> timestamps;  // epoch seconds
  double missing_marker = 0.0;
  /// 1 where the cell was missing on ingest; same layout as `values`.
  std::vector<std::uint8_t> missing;

  std::size_t nodes() const { return values.size(0); }
  std::size_t steps() const { return values.size(1); }
  std::size_t channels() const { return values.size(2); }
  double at(std::size_t n, std::size_t t, std::size_t c) const {
    return values.values()[(n * steps() + t) * channels() + c];
  }
  bool is_missing(std::size_t n, std::size_t t, std::size_t c) const {
    return missing[(n * steps() + t) * channels() + c] != 0;
  }

  /// Builds a dataset from a value cube; cells equal to the marker are
  /// flagged missing. Timestamps default to 0, 300, 600, ...
  static SeriesDataset from_values(Tensor values, std::vector<std::string> node_ids = {},
                                   std::vector<std::int64_t> timestamps = {},
                                   double missing_marker = 0.0);

  /// Steps [begin, end) as a new dataset.
  SeriesDataset slice_steps(std::size_t begin, std::size_t end) const;

  /// Reorders nodes: result node k is source node order[k].
  SeriesDataset permute_nodes(const std::vector<std::size_t>& order) const;

  void validate() const;
};

/// Reads "timestamp,<node>_channel<K>,..." CSV. Empty, "nan" or "NA" cells
/// and cells equal to the marker are missing. Rows are sorted by timestamp.
SeriesDataset load_csv(const std::filesystem::path& path, double missing_marker = 0.0);
SeriesDataset parse_csv(const std::string& text, double missing_marker = 0.0,
                        const std::string& source = "<memory>");
std::string to_csv(const SeriesDataset& ds);
void write_csv(const std::filesystem::path& path, const SeriesDataset& ds);

struct Split {
  SeriesDataset train;
  SeriesDataset val;
  SeriesDataset test;
};

struct SplitLengths {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// floor(train*T) / floor(val*T) / remainder.
SplitLengths split_lengths(std::size_t steps, double train, double val, double test);
Split chronological_split(const SeriesDataset& ds, double train = 0.7, double val = 0.1,
                          double test = 0.2);

/// Per-channel statistics over non-missing entries.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kMinStd = 1e-8;
};

NormStats compute_norm_stats(const SeriesDataset& train);
SeriesDataset normalize(const SeriesDataset& ds, const NormStats& stats);
SeriesDataset denormalize(const SeriesDataset& ds, const NormStats& stats);

/// Stride-1 windows over one dataset. Inputs come from the normalized cube;
/// targets are the target channel in original units.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(const SeriesDataset& raw, const NormStats& stats, std::size_t input_length,
            std::size_t horizon, std::size_t target_channel);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t nodes() const { return nodes_; }
  std::size_t channels() const { return channels_; }
  std::size_t input_length() const { return input_length_; }
  std::size_t horizon() const { return horizon_; }
  double missing_marker() const { return missing_marker_; }
  /// Dataset step index of the first input step of window i.
  std::size_t start(std::size_t i) const { return i; }

  /// [B, N, T_in, C] normalized inputs.
  Tensor inputs(const std::vector<std::size_t>& windows) const;
  /// [B, N, horizon] raw targets.
  Tensor targets(const std::vector<std::size_t>& windows) const;
  /// [B, N] last non-missing raw target-channel value inside each input
  /// window (marker if none).
  Tensor last_observed(const std::vector<std::size_t>& windows) const;

 private:
  std::shared_ptr<const std::vector<double>> normalized_;
  std::shared_ptr<const std::vector<double>> raw_;
  std::shared_ptr<const std::vector<std::uint8_t>> missing_;
  std::size_t nodes_ = 0, steps_ = 0, channels_ = 0;
  std::size_t input_length_ = 0, horizon_ = 0, target_ = 0, count_ = 0;
  double missing_marker_ = 0.0;
};

/// Identity-stats convenience overload (inputs stay in original units).
WindowSet make_windows(const SeriesDataset& ds, std::size_t input_length, std::size_t horizon,
                       std::size_t target_channel = 0,
                       const std::optional<NormStats>& stats = std::nullopt);

}  // namespace taegcn::data
