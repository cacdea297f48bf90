#include "ltsmdiff/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace ltsm {

void SamplerConfig::validate(int schedule_steps) const {
    if (ensemble_size < 1) throw ConfigError("sampler: ensemble_size must be >= 1");
    if (trace_every < 1) throw ConfigError("sampler: trace_every must be >= 1");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("sampler: eta must be in [0, 1]");
    if (steps < 0 || steps > schedule_steps)
        throw ConfigError("sampler: steps must be in [1, N] (or 0 for N)");
}

SamplerConfig::Kind SamplerConfig::parse_kind(const std::string& s) {
    if (s == "ddpm") return Kind::kDdpm;
    if (s == "ddim") return Kind::kDdim;
    throw ConfigError("sampler: unknown kind '" + s + "' (expected ddpm or ddim)");
}

namespace {

void record(DenoiseTrace* trace, int trace_every, int completed, bool final_step, int label,
            const Mat& y) {
    if (!trace) return;
    if (completed % trace_every == 0 || final_step) {
        trace->steps.push_back(label);
        trace->intermediates.push_back(y);
    }
}

void check_step_finite(const Mat& y, int t) {
    if (!all_finite(y))
        throw std::runtime_error("sampler: non-finite state at reverse step t=" +
                                 std::to_string(t));
}

}  // namespace

Mat ddpm_sample(const NoisePredictor& predict, int rows, int cols, const NoiseSchedule& schedule,
                Rng& rng, DenoiseTrace* trace, int trace_every) {
    const int n = schedule.steps;
    Mat y = rng.normal_mat(rows, cols);
    for (int t = n; t >= 1; --t) {
        const Mat eps = predict(y, t);
        check_same_shape(y, eps, "ddpm_sample noise prediction");
        const double alpha = schedule.alpha[t - 1];
        const double beta = schedule.beta[t - 1];
        const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar[t]);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = inv_sqrt_alpha * (y[i] - coef * eps[i]);
        if (t > 1) {
            const double sigma = std::sqrt(beta * (1.0 - schedule.alpha_bar[t - 1]) /
                                           (1.0 - schedule.alpha_bar[t]));
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += sigma * rng.normal();
        }
        check_step_finite(y, t);
        record(trace, trace_every, n - t + 1, t == 1, t - 1, y);
    }
    return y;
}

Mat ddim_sample(const NoisePredictor& predict, int rows, int cols, const NoiseSchedule& schedule,
                int steps, double eta, Rng& rng, DenoiseTrace* trace, int trace_every) {
    const int n = schedule.steps;
    if (steps <= 0) steps = n;
    if (steps > n) throw ConfigError("ddim_sample: steps must be <= schedule steps");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("ddim_sample: eta must be in [0, 1]");

    // Uniform-stride grid N = t_0 > t_1 > … > t_{steps-1} >= 1, then 0.
    std::vector<int> grid(steps);
    for (int i = 0; i < steps; ++i)
        grid[i] = static_cast<int>(std::llround(static_cast<double>(n) * (steps - i) / steps));

    Mat y = rng.normal_mat(rows, cols);
    for (int i = 0; i < steps; ++i) {
        const int t = grid[i];
        const int t_next = (i + 1 < steps) ? grid[i + 1] : 0;
        const Mat eps = predict(y, t);
        check_same_shape(y, eps, "ddim_sample noise prediction");
        const Mat y0_hat = recover_clean(y, t, eps, schedule);
        const double abar_t = schedule.alpha_bar[t];
        const double abar_n = schedule.alpha_bar[t_next];
        const double sigma = eta * std::sqrt((1.0 - abar_n) / (1.0 - abar_t)) *
                             std::sqrt(1.0 - abar_t / abar_n);
        const double dir = std::sqrt(std::max(1.0 - abar_n - sigma * sigma, 0.0));
        const double scale0 = std::sqrt(abar_n);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = scale0 * y0_hat[j] + dir * eps[j];
        if (sigma > 0.0 && t_next > 0)
            for (std::size_t j = 0; j < y.size(); ++j) y[j] += sigma * rng.normal();
        check_step_finite(y, t);
        record(trace, trace_every, i + 1, i + 1 == steps, t_next, y);
    }
    return y;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

ForecastResult forecast_with_uncertainty(Encoder& encoder, UViTDenoiser& denoiser,
                                         const NoiseSchedule& schedule, const Mat& x_normalized,
                                         const SamplerConfig& config,
                                         const NormStats* denorm_stats) {
    config.validate(schedule.steps);
    const int horizon = encoder.config().horizon;
    const int d = encoder.config().channels;

    // One eval graph for both the representation and the head forecast.
    Mat x_repr, ltsm_forecast;
    {
        ad::Graph g(/*grad_enabled=*/false);
        ad::Var repr = encoder.encode(g, x_normalized);
        ad::Var head = encoder.head_forecast(g, repr);
        x_repr = g.value(repr);
        ltsm_forecast = g.value(head);
    }

    NoisePredictor predict = [&denoiser, &x_repr](const Mat& y_noisy, int t) {
        return denoiser.conditional_noise_eval(y_noisy, x_repr, t);
    };

    auto run_member = [&](Rng& rng, DenoiseTrace* trace) {
        if (config.kind == SamplerConfig::Kind::kDdpm)
            return ddpm_sample(predict, horizon, d, schedule, rng, trace, config.trace_every);
        return ddim_sample(predict, horizon, d, schedule, config.steps, config.eta, rng, trace,
                           config.trace_every);
    };

    std::vector<Mat> members(config.ensemble_size);
    DenoiseTrace trace;
    std::exception_ptr member_error;
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < config.ensemble_size; ++e) {
        try {
            Rng member_rng = Rng::derive(config.seed, static_cast<std::uint64_t>(e));
            members[e] = run_member(member_rng, e == 0 ? &trace : nullptr);
        } catch (...) {
#pragma omp critical
            member_error = std::current_exception();
        }
    }
    if (member_error) std::rethrow_exception(member_error);

    Mat mean(horizon, d);
    for (int e = 0; e < config.ensemble_size; ++e) mean += members[e];
    mean = mean * (1.0 / config.ensemble_size);

    Mat band_low(horizon, d), band_high(horizon, d);
    std::vector<double> vals(config.ensemble_size);
    for (std::size_t i = 0; i < mean.size(); ++i) {
        for (int e = 0; e < config.ensemble_size; ++e) vals[e] = members[e][i];
        std::sort(vals.begin(), vals.end());
        band_low[i] = quantile_sorted(vals, 0.05);
        band_high[i] = quantile_sorted(vals, 0.95);
    }

    ForecastResult out;
    out.mean = denorm_stats ? denormalize(mean, *denorm_stats) : mean;
    out.trace = std::move(trace);
    out.trace.initial_ltsm_forecast =
        denorm_stats ? denormalize(ltsm_forecast, *denorm_stats) : ltsm_forecast;
    out.trace.band_low = denorm_stats ? denormalize(band_low, *denorm_stats) : band_low;
    out.trace.band_high = denorm_stats ? denormalize(band_high, *denorm_stats) : band_high;
    if (denorm_stats)
        for (auto& m : out.trace.intermediates) m = denormalize(m, *denorm_stats);
    return out;
}

}  // namespace ltsm
