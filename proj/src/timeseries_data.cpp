#include "ltsmdiff/timeseries_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace ltsm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
long long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

bool parse_timestamp(const std::string& raw, double& out) {
    const std::string s = trim(raw);
    if (parse_number(s, out)) return true;  // epoch integer / float
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    char sep = '\0';
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (n == 3 || n >= 6) {
        if (n >= 4 && sep != ' ' && sep != 'T') return false;
        if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
        out = static_cast<double>(days_from_civil(y, mo, d)) * 86400.0 + h * 3600.0 + mi * 60.0 +
              sec;
        return true;
    }
    return false;
}

}  // namespace

void SplitSpec::validate() const {
    if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0)
        throw ConfigError("split fractions must be non-negative");
    const double s = train_fraction + val_fraction + test_fraction;
    if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1 (got " + std::to_string(s) + ")");
    if (!(few_shot_ratio > 0.0 && few_shot_ratio <= 1.0))
        throw ConfigError("few_shot_ratio must be in (0, 1]");
}

RawSeries load_csv(const std::string& path, const std::string& date_column) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(is, line)) throw DataError("empty CSV file: " + path);
    const auto header = split_line(line);
    int date_idx = -1;
    std::vector<std::string> channels;
    std::vector<int> channel_cols;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        const std::string name = trim(header[i]);
        if (name == date_column) {
            if (date_idx >= 0) throw DataError("duplicate date column '" + date_column + "'");
            date_idx = i;
        } else {
            channels.push_back(name);
            channel_cols.push_back(i);
        }
    }
    if (date_idx < 0)
        throw DataError("date column '" + date_column + "' not found in " + path);
    if (channels.empty()) throw DataError("no numeric channels in " + path);

    std::vector<double> timestamps;
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != header.size())
            throw DataError(path + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        double ts;
        if (!parse_timestamp(fields[date_idx], ts))
            throw DataError(path + ": row " + std::to_string(line_no) +
                            ": unparseable timestamp '" + trim(fields[date_idx]) + "'");
        std::vector<double> row(channels.size());
        bool has_nan = false;
        for (std::size_t c = 0; c < channel_cols.size(); ++c) {
            double v;
            if (!parse_number(fields[channel_cols[c]], v))
                throw DataError(path + ": row " + std::to_string(line_no) + ", column '" +
                                channels[c] + "': non-numeric value '" +
                                trim(fields[channel_cols[c]]) + "'");
            if (std::isnan(v)) has_nan = true;
            row[c] = v;
        }
        if (has_nan) continue;  // rows with NaN are rejected at load
        timestamps.push_back(ts);
        rows.push_back(std::move(row));
    }

    std::vector<int> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return timestamps[a] < timestamps[b]; });

    RawSeries out;
    out.channel_names = channels;
    out.timestamps.resize(rows.size());
    out.values = Mat(static_cast<int>(rows.size()), static_cast<int>(channels.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.timestamps[i] = timestamps[order[i]];
        for (std::size_t c = 0; c < channels.size(); ++c)
            out.values(static_cast<int>(i), static_cast<int>(c)) = rows[order[i]][c];
    }
    for (std::size_t i = 1; i < out.timestamps.size(); ++i)
        if (out.timestamps[i] == out.timestamps[i - 1])
            throw DataError(path + ": duplicate timestamp at sorted row " + std::to_string(i));
    return out;
}

NormStats compute_norm_stats(const RawSeries& series, int train_end) {
    if (train_end <= 0) throw ConfigError("compute_norm_stats: train_end must be > 0");
    if (train_end > series.length())
        throw ConfigError("compute_norm_stats: train_end exceeds series length");
    const int d = series.channels();
    NormStats stats;
    stats.mean.assign(d, 0.0);
    stats.stddev.assign(d, 1.0);
    for (int c = 0; c < d; ++c) {
        double mu = 0.0;
        for (int i = 0; i < train_end; ++i) mu += series.values(i, c);
        mu /= train_end;
        double var = 0.0;
        for (int i = 0; i < train_end; ++i) {
            const double diff = series.values(i, c) - mu;
            var += diff * diff;
        }
        var /= train_end;  // population variance
        stats.mean[c] = mu;
        stats.stddev[c] = var < 1e-24 ? 1.0 : std::sqrt(var);
    }
    return stats;
}

Mat normalize(const Mat& values, const NormStats& stats) {
    if (values.cols() != stats.channels())
        throw ConfigError("normalize: channel count mismatch (" + std::to_string(values.cols()) +
                          " vs " + std::to_string(stats.channels()) + ")");
    Mat out = values;
    for (int i = 0; i < out.rows(); ++i)
        for (int c = 0; c < out.cols(); ++c)
            out(i, c) = (out(i, c) - stats.mean[c]) / stats.stddev[c];
    return out;
}

RawSeries normalize(const RawSeries& series, const NormStats& stats) {
    RawSeries out = series;
    out.values = normalize(series.values, stats);
    return out;
}

Mat denormalize(const Mat& values, const NormStats& stats) {
    if (values.cols() != stats.channels())
        throw ConfigError("denormalize: channel count mismatch");
    Mat out = values;
    for (int i = 0; i < out.rows(); ++i)
        for (int c = 0; c < out.cols(); ++c)
            out(i, c) = out(i, c) * stats.stddev[c] + stats.mean[c];
    return out;
}

std::vector<WindowPair> make_windows(const RawSeries& series, int lookback, int horizon,
                                     int stride) {
    if (lookback < 1 || horizon < 1 || stride < 1)
        throw ConfigError("make_windows: lookback, horizon, and stride must all be >= 1");
    std::vector<WindowPair> out;
    const int L = series.length();
    const int span = lookback + horizon;
    if (L < span) return out;
    for (int start = 0; start + span <= L; start += stride) {
        WindowPair w;
        w.start = start;
        w.context = Mat(lookback, series.channels());
        w.target = Mat(horizon, series.channels());
        for (int i = 0; i < lookback; ++i)
            for (int c = 0; c < series.channels(); ++c)
                w.context(i, c) = series.values(start + i, c);
        for (int i = 0; i < horizon; ++i)
            for (int c = 0; c < series.channels(); ++c)
                w.target(i, c) = series.values(start + lookback + i, c);
        out.push_back(std::move(w));
    }
    return out;
}

std::tuple<std::vector<WindowPair>, std::vector<WindowPair>, std::vector<WindowPair>>
split_chronological(const std::vector<WindowPair>& windows, const SplitSpec& spec) {
    spec.validate();
    const int n = static_cast<int>(windows.size());
    const int n_train = static_cast<int>(std::floor(n * spec.train_fraction));
    const int n_val = static_cast<int>(std::floor(n * spec.val_fraction));

    std::vector<WindowPair> train(windows.begin(), windows.begin() + n_train);

    auto window_end = [](const WindowPair& w) { return w.start + w.lookback() + w.horizon(); };
    int train_end_row = 0;
    for (const auto& w : train) train_end_row = std::max(train_end_row, window_end(w));

    std::vector<WindowPair> val;
    for (int i = n_train; i < n_train + n_val; ++i)
        if (windows[i].start >= train_end_row) val.push_back(windows[i]);

    int val_end_row = train_end_row;
    for (const auto& w : val) val_end_row = std::max(val_end_row, window_end(w));

    std::vector<WindowPair> test;
    for (int i = n_train + n_val; i < n; ++i)
        if (windows[i].start >= val_end_row) test.push_back(windows[i]);

    auto warn_empty = [&](const char* name, double frac, const std::vector<WindowPair>& s) {
        if (frac > 0.0 && n > 0 && s.empty())
            std::cerr << "warning: " << name << " split is empty after boundary removal\n";
    };
    warn_empty("train", spec.train_fraction, train);
    warn_empty("val", spec.val_fraction, val);
    warn_empty("test", spec.test_fraction, test);

    return {std::move(train), std::move(val), std::move(test)};
}

std::vector<WindowPair> subsample_fewshot(const std::vector<WindowPair>& train_windows,
                                          double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("subsample_fewshot: ratio not in (0, 1]");
    if (train_windows.empty()) return {};
    const auto n = static_cast<std::size_t>(train_windows.size());
    std::size_t keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
    keep = std::max<std::size_t>(1, std::min(keep, n));
    return {train_windows.begin(), train_windows.begin() + static_cast<std::ptrdiff_t>(keep)};
}

std::uint64_t window_set_hash(const std::vector<WindowPair>& windows) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& w : windows) {
        feed(w.context.data(), w.context.size() * sizeof(double));
        feed(w.target.data(), w.target.size() * sizeof(double));
    }
    return h;
}

void save_windows(TensorArchive& archive, const std::string& prefix,
                  const std::vector<WindowPair>& windows) {
    char name[64];
    for (std::size_t i = 0; i < windows.size(); ++i) {
        std::snprintf(name, sizeof(name), "%s%06zu", prefix.c_str(), i);
        archive.set(std::string(name) + ".context", windows[i].context);
        archive.set(std::string(name) + ".target", windows[i].target);
    }
    archive.metadata()[prefix + "count"] = windows.size();
    auto starts = nlohmann::json::array();
    for (const auto& w : windows) starts.push_back(w.start);
    archive.metadata()[prefix + "starts"] = starts;
}

std::vector<WindowPair> load_windows(const TensorArchive& archive, const std::string& prefix) {
    if (!archive.metadata().contains(prefix + "count"))
        throw DataError("archive has no window set with prefix '" + prefix + "'");
    const auto count = archive.metadata()[prefix + "count"].get<std::size_t>();
    const auto starts = archive.metadata()[prefix + "starts"];
    std::vector<WindowPair> out(count);
    char name[64];
    for (std::size_t i = 0; i < count; ++i) {
        std::snprintf(name, sizeof(name), "%s%06zu", prefix.c_str(), i);
        out[i].context = archive.get(std::string(name) + ".context");
        out[i].target = archive.get(std::string(name) + ".target");
        out[i].start = starts[i].get<int>();
    }
    return out;
}

}  // namespace ltsm
