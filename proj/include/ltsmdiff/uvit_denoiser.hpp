#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ltsmdiff/nn.hpp"

namespace ltsm {

struct UViTConfig {
    int depth = 4;           // transformer blocks, even (skip pairing)
    int width = 64;
    int n_heads = 4;
    int time_embed_dim = 32;  // sinusoidal feature size, even
    int cond_tokens = 96;     // T
    int cond_dim = 64;        // m
    int target_tokens = 96;   // H
    int target_dim = 7;       // d
    double dropout_p = 0.0;

    void validate() const;
};

/// Joint noise-prediction network. Condition rows (T×m) and target rows
/// (H×d) are projected to a shared width, tagged with modality and position
/// embeddings, and prepended with two timestep tokens. The block stack is
/// U-shaped: block i > depth/2 consumes a linear fusion of its sequential
/// input with the output of block depth−i (long skip; block 0 = the input
/// sequence). Outputs are projected back to (T×m, H×d) noise estimates.
class UViTDenoiser {
public:
    UViTDenoiser(UViTConfig cfg, std::uint64_t seed);

    std::pair<ad::Var, ad::Var> predict_noise(ad::Graph& g, ad::Var x_noisy, ad::Var y_noisy,
                                              int t_x, int t_y, bool training = false,
                                              Rng* rng = nullptr);
    std::pair<Mat, Mat> predict_noise_eval(const Mat& x_noisy, const Mat& y_noisy, int t_x,
                                           int t_y);

    /// Inference wrapper: noise prediction for the target with the condition
    /// pinned clean (t_x = 0). Returns only ε̂_y.
    Mat conditional_noise_eval(const Mat& y_noisy, const Mat& x_clean_repr, int t_y);

    /// Deterministic sinusoidal features of an integer timestep (1×dim).
    static Mat sinusoidal_features(int t, int dim);

    void collect_params(std::vector<Parameter*>& out);
    std::vector<Parameter*> params();
    std::int64_t param_count();

    const UViTConfig& config() const { return cfg_; }

    /// Total UViTDenoiser instances ever constructed in this process; lets
    /// tests assert that encoder-only experiment variants never build one.
    static long construction_count();

private:
    ad::Var time_token(ad::Graph& g, int t);

    UViTConfig cfg_;
    Linear in_x_, in_y_;
    Parameter mode_x_, mode_y_;
    Parameter pos_;
    Linear time_fc_, time_proj_;
    std::vector<AttentionBlock> blocks_;
    std::vector<Linear> skip_fusions_;  // one per block in the second half
    Linear out_x_, out_y_;
};

}  // namespace ltsm
