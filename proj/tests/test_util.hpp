#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "ltsmdiff/graph.hpp"
#include "ltsmdiff/mat.hpp"
#include "ltsmdiff/rng.hpp"
#include "ltsmdiff/timeseries_data.hpp"

namespace testutil {

using ltsm::Mat;
using ltsm::Parameter;

/// Recomputes the scalar loss from scratch at the current parameter values.
using LossFn = std::function<double()>;

struct GradCheck {
    double max_rel_err = 0.0;
    std::string worst;
};

/// Central-difference check of Parameter::grad (must already hold the
/// analytic gradient). Relative error uses a 1e-5 denominator floor so
/// finite-difference noise on near-zero gradients cannot dominate.
inline GradCheck finite_difference_check(const std::vector<Parameter*>& params,
                                         const LossFn& loss, double h = 1e-5) {
    GradCheck result;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            const double step = h * std::max(1.0, std::abs(saved));
            p->value[i] = saved + step;
            const double lp = loss();
            p->value[i] = saved - step;
            const double lm = loss();
            p->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = p->grad[i];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-5});
            const double rel = std::abs(an - fd) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s[%zu]: analytic=%.10g fd=%.10g", p->name.c_str(),
                              i, an, fd);
                result.worst = buf;
            }
        }
    }
    return result;
}

/// Multi-channel sinusoid series: channel c is sin(2π·freq·(t + phase·c)).
inline ltsm::RawSeries sinusoid_series(int length, int channels, double freq = 0.02,
                                       double noise_std = 0.0, std::uint64_t seed = 7) {
    ltsm::RawSeries s;
    ltsm::Rng rng(seed);
    s.values = Mat(length, channels);
    s.timestamps.resize(length);
    for (int c = 0; c < channels; ++c) s.channel_names.push_back("ch" + std::to_string(c));
    for (int t = 0; t < length; ++t) {
        s.timestamps[t] = t;
        for (int c = 0; c < channels; ++c) {
            const double phase = 5.0 * c;
            s.values(t, c) =
                std::sin(2.0 * 3.14159265358979 * freq * (t + phase)) + noise_std * rng.normal();
        }
    }
    return s;
}

inline void write_series_csv(const std::string& path, const ltsm::RawSeries& s) {
    std::ofstream os(path);
    os << "date";
    for (const auto& n : s.channel_names) os << "," << n;
    os << "\n";
    for (int t = 0; t < s.length(); ++t) {
        os << static_cast<long long>(s.timestamps[t]);
        char buf[64];
        for (int c = 0; c < s.channels(); ++c) {
            std::snprintf(buf, sizeof(buf), ",%.17g", s.values(t, c));
            os << buf;
        }
        os << "\n";
    }
}

/// Unique scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("ltsmdiff_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
