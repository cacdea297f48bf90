#include "ltsmdiff/uvit_denoiser.hpp"

#include <atomic>
#include <cmath>

namespace ltsm {

namespace {
std::atomic<long> g_constructed{0};
}

void UViTConfig::validate() const {
    if (depth < 2 || depth % 2 != 0) throw ConfigError("uvit: depth must be even and >= 2");
    if (width < 1 || n_heads < 1 || width % n_heads != 0)
        throw ConfigError("uvit: width must be divisible by n_heads");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("uvit: time_embed_dim must be even and >= 2");
    if (cond_tokens < 1 || cond_dim < 1 || target_tokens < 1 || target_dim < 1)
        throw ConfigError("uvit: token counts and dims must be >= 1");
    if (dropout_p < 0 || dropout_p >= 1) throw ConfigError("uvit: dropout must be in [0, 1)");
}

long UViTDenoiser::construction_count() { return g_constructed.load(); }

UViTDenoiser::UViTDenoiser(UViTConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    ++g_constructed;
    Rng rng(seed);
    const int w = cfg_.width;
    in_x_ = Linear::init("uvit.in_x", cfg_.cond_dim, w, rng);
    in_y_ = Linear::init("uvit.in_y", cfg_.target_dim, w, rng);
    mode_x_ = Parameter("uvit.mode_x", rng.normal_mat(1, w, 0.02));
    mode_y_ = Parameter("uvit.mode_y", rng.normal_mat(1, w, 0.02));
    pos_ = Parameter("uvit.pos", rng.normal_mat(cfg_.cond_tokens + cfg_.target_tokens, w, 0.02));
    time_fc_ = Linear::init("uvit.time_mlp.fc", cfg_.time_embed_dim, w, rng);
    time_proj_ = Linear::init("uvit.time_mlp.proj", w, w, rng);

    AttentionBlockOptions opts;
    opts.width = w;
    opts.n_heads = cfg_.n_heads;
    opts.causal = false;
    opts.dropout_p = cfg_.dropout_p;
    blocks_.reserve(cfg_.depth);
    for (int i = 0; i < cfg_.depth; ++i)
        blocks_.emplace_back("uvit.block" + std::to_string(i), opts, rng);

    skip_fusions_.reserve(cfg_.depth / 2);
    for (int i = cfg_.depth / 2 + 1; i <= cfg_.depth; ++i)
        skip_fusions_.push_back(
            Linear::init("uvit.skip" + std::to_string(i - 1), 2 * w, w, rng));

    out_x_ = Linear::init("uvit.out_x", w, cfg_.cond_dim, rng);
    out_y_ = Linear::init("uvit.out_y", w, cfg_.target_dim, rng);
}

Mat UViTDenoiser::sinusoidal_features(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("sinusoidal_features: dim must be even >= 2");
    const int half = dim / 2;
    Mat out(1, dim);
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / half);
        out(0, 2 * k) = std::sin(t * freq);
        out(0, 2 * k + 1) = std::cos(t * freq);
    }
    return out;
}

ad::Var UViTDenoiser::time_token(ad::Graph& g, int t) {
    ad::Var feat = g.input(sinusoidal_features(t, cfg_.time_embed_dim));
    return time_proj_.forward(g, g.gelu(time_fc_.forward(g, feat)));
}

std::pair<ad::Var, ad::Var> UViTDenoiser::predict_noise(ad::Graph& g, ad::Var x_noisy,
                                                        ad::Var y_noisy, int t_x, int t_y,
                                                        bool training, Rng* rng) {
    const Mat& xv = g.value(x_noisy);
    const Mat& yv = g.value(y_noisy);
    if (xv.rows() != cfg_.cond_tokens || xv.cols() != cfg_.cond_dim)
        throw ConfigError("uvit: condition must be " + std::to_string(cfg_.cond_tokens) + "x" +
                          std::to_string(cfg_.cond_dim) + ", got " + xv.shape_str());
    if (yv.rows() != cfg_.target_tokens || yv.cols() != cfg_.target_dim)
        throw ConfigError("uvit: target must be " + std::to_string(cfg_.target_tokens) + "x" +
                          std::to_string(cfg_.target_dim) + ", got " + yv.shape_str());
    if (t_x < 0 || t_y < 0) throw ConfigError("uvit: negative timestep");

    const int T = cfg_.cond_tokens, H = cfg_.target_tokens;

    ad::Var hx = g.add_rowvec(in_x_.forward(g, x_noisy), g.param(mode_x_));
    ad::Var hy = g.add_rowvec(in_y_.forward(g, y_noisy), g.param(mode_y_));
    ad::Var tokens = g.add(g.concat_rows({hx, hy}), g.param(pos_));
    ad::Var seq = g.concat_rows({time_token(g, t_x), time_token(g, t_y), tokens});

    // U-shaped stack: outs[0] is the input sequence, outs[i] block i's output.
    std::vector<ad::Var> outs;
    outs.reserve(cfg_.depth + 1);
    outs.push_back(seq);
    ad::Var h = seq;
    for (int i = 1; i <= cfg_.depth; ++i) {
        if (i > cfg_.depth / 2) {
            ad::Var fused = g.concat_cols(h, outs[cfg_.depth - i]);
            h = skip_fusions_[i - cfg_.depth / 2 - 1].forward(g, fused);
        }
        h = blocks_[i - 1].forward(g, h, training, rng);
        outs.push_back(h);
    }

    ad::Var x_part = g.slice_rows(h, 2, 2 + T);
    ad::Var y_part = g.slice_rows(h, 2 + T, 2 + T + H);
    return {out_x_.forward(g, x_part), out_y_.forward(g, y_part)};
}

std::pair<Mat, Mat> UViTDenoiser::predict_noise_eval(const Mat& x_noisy, const Mat& y_noisy,
                                                     int t_x, int t_y) {
    ad::Graph g(/*grad_enabled=*/false);
    auto [ex, ey] = predict_noise(g, g.input(x_noisy), g.input(y_noisy), t_x, t_y);
    return {g.value(ex), g.value(ey)};
}

Mat UViTDenoiser::conditional_noise_eval(const Mat& y_noisy, const Mat& x_clean_repr, int t_y) {
    ad::Graph g(/*grad_enabled=*/false);
    auto [ex, ey] =
        predict_noise(g, g.input(x_clean_repr), g.input(y_noisy), /*t_x=*/0, t_y);
    (void)ex;
    return g.value(ey);
}

void UViTDenoiser::collect_params(std::vector<Parameter*>& out) {
    in_x_.collect(out);
    in_y_.collect(out);
    out.push_back(&mode_x_);
    out.push_back(&mode_y_);
    out.push_back(&pos_);
    time_fc_.collect(out);
    time_proj_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    for (auto& s : skip_fusions_) s.collect(out);
    out_x_.collect(out);
    out_y_.collect(out);
}

std::vector<Parameter*> UViTDenoiser::params() {
    std::vector<Parameter*> out;
    collect_params(out);
    return out;
}

std::int64_t UViTDenoiser::param_count() {
    std::int64_t n = 0;
    for (auto* p : params()) n += static_cast<std::int64_t>(p->value.size());
    return n;
}

}  // namespace ltsm
