#include "ltsmdiff/diffusion_core.hpp"

#include <cmath>

namespace ltsm {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 0; t < steps; ++t) {
        s.beta[t] = steps == 1
                        ? beta_start
                        : beta_start + (beta_end - beta_start) * static_cast<double>(t) / (steps - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t + 1] = s.alpha_bar[t] * s.alpha[t];
    }
    return s;
}

void NoiseSchedule::validate() const {
    if (steps < 1 || static_cast<int>(beta.size()) != steps ||
        static_cast<int>(alpha_bar.size()) != steps + 1)
        throw ConfigError("schedule: inconsistent sizes");
    for (int t = 0; t < steps; ++t) {
        if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw ConfigError("schedule: beta out of (0,1)");
        if (t > 0 && beta[t] < beta[t - 1]) throw ConfigError("schedule: beta must be non-decreasing");
    }
    if (alpha_bar[0] != 1.0) throw ConfigError("schedule: alpha_bar[0] must be 1");
    for (int t = 1; t <= steps; ++t)
        if (!(alpha_bar[t] < alpha_bar[t - 1] && alpha_bar[t] > 0.0))
            throw ConfigError("schedule: alpha_bar must be strictly decreasing and positive");
}

namespace {

void check_timestep(int t, int steps, int low) {
    if (t < low || t > steps)
        throw ConfigError("timestep " + std::to_string(t) + " outside [" + std::to_string(low) +
                          ", " + std::to_string(steps) + "]");
}

}  // namespace

Mat forward_noise(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& schedule) {
    check_timestep(t, schedule.steps, 0);
    check_same_shape(z0, eps, "forward_noise");
    if (t == 0) return z0;
    const double a = std::sqrt(schedule.alpha_bar[t]);
    const double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
    Mat out = z0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + b * eps[i];
    return out;
}

ad::Var forward_noise(ad::Graph& g, ad::Var z0, int t, const Mat& eps,
                      const NoiseSchedule& schedule) {
    check_timestep(t, schedule.steps, 0);
    check_same_shape(g.value(z0), eps, "forward_noise");
    if (t == 0) return z0;
    const double a = std::sqrt(schedule.alpha_bar[t]);
    const double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
    return g.add(g.scale(z0, a), g.input(eps * b));
}

Mat recover_clean(const Mat& z_t, int t, const Mat& eps, const NoiseSchedule& schedule) {
    check_timestep(t, schedule.steps, 1);
    check_same_shape(z_t, eps, "recover_clean");
    const double abar = schedule.alpha_bar[t];
    if (abar <= 1e-12)
        throw std::runtime_error("recover_clean: alpha_bar numerically degenerate at t=" +
                                 std::to_string(t));
    const double inv_a = 1.0 / std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Mat out = z_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - b * eps[i]) * inv_a;
    return out;
}

DualTimestep sample_timesteps(Rng& rng, int steps) {
    if (steps < 1) throw ConfigError("sample_timesteps: steps must be >= 1");
    DualTimestep ts;
    ts.t_x = rng.uniform_int(0, steps);
    ts.t_y = rng.uniform_int(0, steps);
    return ts;
}

double diffusion_loss(const Mat& eps_x, const Mat& eps_y, const Mat& eps_x_hat,
                      const Mat& eps_y_hat, LossReduction reduction) {
    check_same_shape(eps_x, eps_x_hat, "diffusion_loss x");
    check_same_shape(eps_y, eps_y_hat, "diffusion_loss y");
    double term_x = sq_norm(eps_x - eps_x_hat);
    double term_y = sq_norm(eps_y - eps_y_hat);
    if (reduction == LossReduction::kMean) {
        term_x /= static_cast<double>(eps_x.size());
        term_y /= static_cast<double>(eps_y.size());
    }
    return term_x + term_y;
}

ad::Var diffusion_loss(ad::Graph& g, ad::Var eps_x_hat, ad::Var eps_y_hat, const Mat& eps_x,
                       const Mat& eps_y, LossReduction reduction) {
    check_same_shape(g.value(eps_x_hat), eps_x, "diffusion_loss x");
    check_same_shape(g.value(eps_y_hat), eps_y, "diffusion_loss y");
    ad::Var tx = g.sum_sq(g.sub(eps_x_hat, g.input(eps_x)));
    ad::Var ty = g.sum_sq(g.sub(eps_y_hat, g.input(eps_y)));
    if (reduction == LossReduction::kMean) {
        tx = g.scale(tx, 1.0 / static_cast<double>(eps_x.size()));
        ty = g.scale(ty, 1.0 / static_cast<double>(eps_y.size()));
    }
    return g.add(tx, ty);
}

double total_loss(double loss_llm, double loss_diff, double lambda) {
    if (lambda < 0) throw ConfigError("total_loss: lambda must be >= 0");
    if (lambda == 0.0) return loss_llm;
    return loss_llm + lambda * loss_diff;
}

ad::Var total_loss(ad::Graph& g, ad::Var loss_llm, ad::Var loss_diff, double lambda) {
    if (lambda < 0) throw ConfigError("total_loss: lambda must be >= 0");
    if (lambda == 0.0) return loss_llm;
    return g.add(loss_llm, g.scale(loss_diff, lambda));
}

}  // namespace ltsm
