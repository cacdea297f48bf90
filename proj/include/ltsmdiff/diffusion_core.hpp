#pragma once

#include <vector>

#include "ltsmdiff/errors.hpp"
#include "ltsmdiff/graph.hpp"
#include "ltsmdiff/mat.hpp"
#include "ltsmdiff/rng.hpp"

namespace ltsm {

/// Forward-process schedule: per-step noise variances β_t, retention
/// α_t = 1−β_t, and the cumulative products ᾱ_t with ᾱ_0 = 1 (index t runs
/// 0..N in alpha_bar; beta/alpha are indexed 1..N via [t-1]).
struct NoiseSchedule {
    int steps = 0;  // N
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;  // size N+1

    static NoiseSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02);
    void validate() const;
};

struct DualTimestep {
    int t_x = 0;
    int t_y = 0;
};

/// √ᾱ_t·z0 + √(1−ᾱ_t)·eps, t ∈ [0, N]. t = 0 returns z0 exactly.
Mat forward_noise(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& schedule);
/// Tape version (gradients flow into z0).
ad::Var forward_noise(ad::Graph& g, ad::Var z0, int t, const Mat& eps,
                      const NoiseSchedule& schedule);

/// (z_t − √(1−ᾱ_t)·eps)/√ᾱ_t, t ∈ [1, N]. Inverse of forward_noise for the
/// same eps. Errors when ᾱ_t ≤ 1e-12 (numerically degenerate).
Mat recover_clean(const Mat& z_t, int t, const Mat& eps, const NoiseSchedule& schedule);

/// Independent uniform draws from {0, 1, …, N} for condition and target.
DualTimestep sample_timesteps(Rng& rng, int steps);

enum class LossReduction { kMean, kSum };

/// Noise-matching loss: ‖ε_x−ε̂_x‖² + ‖ε_y−ε̂_y‖², each term element-averaged
/// (kMean, default) or left as a raw sum (kSum).
double diffusion_loss(const Mat& eps_x, const Mat& eps_y, const Mat& eps_x_hat,
                      const Mat& eps_y_hat, LossReduction reduction = LossReduction::kMean);
ad::Var diffusion_loss(ad::Graph& g, ad::Var eps_x_hat, ad::Var eps_y_hat, const Mat& eps_x,
                       const Mat& eps_y, LossReduction reduction = LossReduction::kMean);

/// L = L_llm + λ·L_diff. λ = 0 returns L_llm exactly.
double total_loss(double loss_llm, double loss_diff, double lambda);
ad::Var total_loss(ad::Graph& g, ad::Var loss_llm, ad::Var loss_diff, double lambda);

}  // namespace ltsm
