#include "ltsmdiff/ltsm_encoder.hpp"

#include <algorithm>
#include <set>

namespace ltsm {

void EncoderConfig::validate() const {
    if (channels < 1) throw ConfigError("encoder: channels must be >= 1");
    if (width < 1) throw ConfigError("encoder: width must be >= 1");
    if (n_heads < 1 || width % n_heads != 0)
        throw ConfigError("encoder: width must be divisible by n_heads");
    if (n_blocks < 0 || n_blocks > 12) throw ConfigError("encoder: n_blocks must be in [0, 12]");
    if (dropout_p < 0 || dropout_p >= 1) throw ConfigError("encoder: dropout must be in [0, 1)");
    if (lookback < 1 || horizon < 1) throw ConfigError("encoder: lookback and horizon must be >= 1");
    if (lookback > max_context) throw ConfigError("encoder: lookback exceeds max_context");
    lora.validate();
}

Encoder::Encoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    in_proj_ = Linear::init("embedding.in_proj", cfg_.channels, cfg_.width, rng);
    pos_ = Parameter("embedding.pos", rng.normal_mat(cfg_.max_context, cfg_.width, 0.02));

    AttentionBlockOptions local_opts;
    local_opts.width = cfg_.width;
    local_opts.n_heads = cfg_.n_heads;
    local_opts.causal = true;
    local_opts.dropout_p = cfg_.dropout_p;
    local_layer_ = AttentionBlock("embedding.local", local_opts, rng);

    AttentionBlockOptions block_opts = local_opts;
    block_opts.lora = cfg_.lora;
    blocks_.reserve(cfg_.n_blocks);
    for (int i = 0; i < cfg_.n_blocks; ++i)
        blocks_.emplace_back("block" + std::to_string(i), block_opts, rng);

    head_ = Linear::init("head", cfg_.lookback * cfg_.width, cfg_.horizon * cfg_.channels, rng);
}

ad::Var Encoder::embed(ad::Graph& g, const Mat& x, bool training, Rng* rng) {
    if (x.cols() != cfg_.channels)
        throw ConfigError("encoder: input has " + std::to_string(x.cols()) + " channels, expected " +
                          std::to_string(cfg_.channels));
    if (x.rows() > cfg_.max_context)
        throw ConfigError("encoder: input length exceeds max_context");
    if (!all_finite(x)) throw std::runtime_error("encoder: non-finite input");

    ad::Var h = in_proj_.forward(g, g.input(x));
    ad::Var pos = g.slice_rows(g.param(pos_), 0, x.rows());
    h = g.add(h, pos);
    return local_layer_.forward(g, h, training, rng);
}

ad::Var Encoder::encode(ad::Graph& g, const Mat& x, bool training, Rng* rng) {
    ad::Var h = embed(g, x, training, rng);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        h = blocks_[i].forward(g, h, training, rng);
        g.check_finite(h, "encoder block" + std::to_string(i));
    }
    return h;
}

ad::Var Encoder::head_forecast(ad::Graph& g, ad::Var repr) {
    const Mat& rv = g.value(repr);
    if (rv.rows() != cfg_.lookback || rv.cols() != cfg_.width)
        throw ConfigError("encoder head: representation must be " + std::to_string(cfg_.lookback) +
                          "x" + std::to_string(cfg_.width));
    ad::Var flat = g.reshape(repr, 1, cfg_.lookback * cfg_.width);
    ad::Var out = head_.forward(g, flat);
    return g.reshape(out, cfg_.horizon, cfg_.channels);
}

Mat Encoder::encode_eval(const Mat& x) {
    ad::Graph g(/*grad_enabled=*/false);
    return g.value(encode(g, x));
}

Mat Encoder::forecast_eval(const Mat& x) {
    ad::Graph g(/*grad_enabled=*/false);
    return g.value(head_forecast(g, encode(g, x)));
}

ad::Var Encoder::loss(ad::Graph& g, ad::Var forecast, const Mat& target, bool channel_mean) {
    const Mat& fv = g.value(forecast);
    check_same_shape(fv, target, "encoder loss");
    ad::Var diff = g.sub(forecast, g.input(target));
    double denom = static_cast<double>(target.rows());
    if (channel_mean) denom *= static_cast<double>(target.cols());
    return g.scale(g.sum_sq(diff), 1.0 / denom);
}

void Encoder::collect_params(std::vector<Parameter*>& out) {
    in_proj_.collect(out);
    out.push_back(&pos_);
    local_layer_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    head_.collect(out);
}

std::vector<Parameter*> Encoder::params() {
    std::vector<Parameter*> out;
    collect_params(out);
    return out;
}

Encoder::ParamBreakdown Encoder::parameter_breakdown() {
    ParamBreakdown pb;
    for (auto& b : blocks_) pb.lora += b.lora_param_count();

    std::vector<Parameter*> emb;
    in_proj_.collect(emb);
    emb.push_back(&pos_);
    local_layer_.collect(emb);
    for (auto* p : emb)
        if (p->trainable) pb.embedding += static_cast<std::int64_t>(p->value.size());
    pb.head = head_.param_count();

    for (auto* p : params())
        if (!p->trainable) pb.frozen += static_cast<std::int64_t>(p->value.size());
    return pb;
}

void Encoder::save_backbone(TensorArchive& archive) {
    std::vector<Parameter*> ps;
    for (auto& b : blocks_) b.collect(ps);
    for (auto* p : ps)
        if (!p->trainable) archive.set(p->name, p->value);
}

void Encoder::load_backbone(const TensorArchive& archive, std::uint64_t adapter_seed) {
    std::vector<Parameter*> ps;
    for (auto& b : blocks_) b.collect(ps);
    std::vector<std::string> problems;
    for (auto* p : ps) {
        if (p->trainable) continue;
        if (!archive.has(p->name)) {
            problems.push_back("missing " + p->name);
            continue;
        }
        const Mat& t = archive.get(p->name);
        if (!t.same_shape(p->value))
            problems.push_back("shape mismatch " + p->name + " (" + t.shape_str() + " vs " +
                               p->value.shape_str() + ")");
    }
    if (!problems.empty()) {
        std::string msg = "backbone load failed:";
        for (const auto& s : problems) msg += "\n  " + s;
        throw ConfigError(msg);
    }
    for (auto* p : ps)
        if (!p->trainable) p->value = archive.get(p->name);
    Rng rng(adapter_seed);
    for (auto& b : blocks_) b.reset_adapters(rng.next_u64());
}

}  // namespace ltsm
