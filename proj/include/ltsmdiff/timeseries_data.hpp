#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "ltsmdiff/archive.hpp"
#include "ltsmdiff/errors.hpp"
#include "ltsmdiff/mat.hpp"

namespace ltsm {

/// A multivariate series: L time steps of d channels plus timestamps
/// (epoch seconds). Rows are sorted by timestamp and contain no NaN.
struct RawSeries {
    std::vector<double> timestamps;
    Mat values;  // L×d
    std::vector<std::string> channel_names;

    int length() const { return values.rows(); }
    int channels() const { return values.cols(); }
};

/// Per-channel mean and population standard deviation, computed on the
/// training rows only. Zero-variance channels fall back to std = 1.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    int channels() const { return static_cast<int>(mean.size()); }
};

/// One training example: a T×d context followed immediately by an H×d
/// target. `start` is the context's first row in the source series.
struct WindowPair {
    Mat context;  // T×d
    Mat target;   // H×d
    int start = 0;

    int lookback() const { return context.rows(); }
    int horizon() const { return target.rows(); }
    int channels() const { return context.cols(); }
};

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    double few_shot_ratio = 1.0;
    void validate() const;
};

/// Loads a header-first CSV with one date column (ISO-8601 or epoch
/// integer) and numeric channels. Rows containing NaN values are dropped;
/// non-numeric cells and duplicate timestamps are errors.
RawSeries load_csv(const std::string& path, const std::string& date_column = "date");

/// Stats over rows [0, train_end).
NormStats compute_norm_stats(const RawSeries& series, int train_end);

RawSeries normalize(const RawSeries& series, const NormStats& stats);
Mat normalize(const Mat& values, const NormStats& stats);
Mat denormalize(const Mat& values, const NormStats& stats);

/// Sliding windows at offsets 0, stride, 2·stride, …
/// Count = floor((L − T − H)/stride) + 1 when L ≥ T + H, else 0.
std::vector<WindowPair> make_windows(const RawSeries& series, int lookback, int horizon,
                                     int stride = 1);

/// Partitions windows chronologically by count, then drops val/test windows
/// whose source rows would overlap an earlier split.
std::tuple<std::vector<WindowPair>, std::vector<WindowPair>, std::vector<WindowPair>>
split_chronological(const std::vector<WindowPair>& windows, const SplitSpec& spec);

/// First max(1, floor(ratio·N)) windows, chronological order.
std::vector<WindowPair> subsample_fewshot(const std::vector<WindowPair>& train_windows,
                                          double ratio);

/// FNV-1a over the raw bytes of every window; used to assert that
/// experiment cells saw identical data.
std::uint64_t window_set_hash(const std::vector<WindowPair>& windows);

void save_windows(TensorArchive& archive, const std::string& prefix,
                  const std::vector<WindowPair>& windows);
std::vector<WindowPair> load_windows(const TensorArchive& archive, const std::string& prefix);

}  // namespace ltsm
