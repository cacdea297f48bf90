#include "ltsmdiff/nn.hpp"

#include <cmath>

namespace ltsm {

Linear Linear::init(const std::string& name, int d_in, int d_out, Rng& rng, double init_std,
                    bool trainable, bool with_bias) {
    Linear l;
    l.weight = Parameter(name + ".weight", rng.normal_mat(d_out, d_in, init_std), trainable);
    if (with_bias) l.bias = Parameter(name + ".bias", Mat(1, d_out), trainable);
    return l;
}

ad::Var Linear::forward(ad::Graph& g, ad::Var x) {
    ad::Var y = g.matmul_nt(x, g.param(weight));
    if (!bias.value.empty()) y = g.add_rowvec(y, g.param(bias));
    return y;
}

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (!bias.value.empty()) out.push_back(&bias);
}

Mat causal_mask(int seq_len) {
    Mat m(seq_len, seq_len);
    for (int i = 0; i < seq_len; ++i)
        for (int j = i + 1; j < seq_len; ++j) m(i, j) = -1e30;
    return m;
}

AttentionBlock::AttentionBlock(const std::string& prefix, const AttentionBlockOptions& opts,
                               Rng& init_rng)
    : opts_(opts) {
    if (opts.width % opts.n_heads != 0)
        throw ConfigError(prefix + ": width must be divisible by n_heads");
    const int w = opts.width;
    const bool frozen = opts.lora.has_value();

    Mat ones(1, w, 1.0);
    ln1_gamma_ = Parameter(prefix + ".ln1.gamma", ones, !frozen);
    ln1_beta_ = Parameter(prefix + ".ln1.beta", Mat(1, w), !frozen);
    ln2_gamma_ = Parameter(prefix + ".ln2.gamma", ones, !frozen);
    ln2_beta_ = Parameter(prefix + ".ln2.beta", Mat(1, w), !frozen);

    const double std = 0.02;
    if (frozen) {
        opts.lora->validate();
        lora_q_ = LoRAAdapter::init(prefix + ".q", init_rng.normal_mat(w, w, std), Mat(1, w),
                                    *opts.lora, init_rng.next_u64());
        lora_k_ = LoRAAdapter::init(prefix + ".k", init_rng.normal_mat(w, w, std), Mat(1, w),
                                    *opts.lora, init_rng.next_u64());
        lora_v_ = LoRAAdapter::init(prefix + ".v", init_rng.normal_mat(w, w, std), Mat(1, w),
                                    *opts.lora, init_rng.next_u64());
    } else {
        lin_q_ = Linear::init(prefix + ".q", w, w, init_rng, std);
        lin_k_ = Linear::init(prefix + ".k", w, w, init_rng, std);
        lin_v_ = Linear::init(prefix + ".v", w, w, init_rng, std);
    }
    attn_out_ = Linear::init(prefix + ".attn_out", w, w, init_rng, std, !frozen);
    mlp_fc_ = Linear::init(prefix + ".mlp_fc", w, 4 * w, init_rng, std, !frozen);
    mlp_proj_ = Linear::init(prefix + ".mlp_proj", 4 * w, w, init_rng, std, !frozen);
}

ad::Var AttentionBlock::project_qkv(ad::Graph& g, ad::Var h, int which, bool training, Rng* rng) {
    if (opts_.lora) {
        LoRAAdapter& a = which == 0 ? *lora_q_ : which == 1 ? *lora_k_ : *lora_v_;
        return a.forward(g, h, training, rng);
    }
    Linear& l = which == 0 ? *lin_q_ : which == 1 ? *lin_k_ : *lin_v_;
    return l.forward(g, h);
}

ad::Var AttentionBlock::forward(ad::Graph& g, ad::Var x, bool training, Rng* rng) {
    const int seq = g.value(x).rows();
    const int w = opts_.width;
    const int hd = w / opts_.n_heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    ad::Var h = g.layer_norm(x, g.param(ln1_gamma_), g.param(ln1_beta_));
    ad::Var q = project_qkv(g, h, 0, training, rng);
    ad::Var k = project_qkv(g, h, 1, training, rng);
    ad::Var v = project_qkv(g, h, 2, training, rng);

    ad::Var mask;
    if (opts_.causal) mask = g.input(causal_mask(seq));

    ad::Var merged;
    for (int head = 0; head < opts_.n_heads; ++head) {
        const int c0 = head * hd, c1 = (head + 1) * hd;
        ad::Var qh = g.slice_cols(q, c0, c1);
        ad::Var kh = g.slice_cols(k, c0, c1);
        ad::Var vh = g.slice_cols(v, c0, c1);
        ad::Var scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_hd);
        if (mask.valid()) scores = g.add(scores, mask);
        ad::Var probs = g.softmax_rows(scores);
        ad::Var ctx = g.matmul(probs, vh);
        merged = head == 0 ? ctx : g.concat_cols(merged, ctx);
    }
    ad::Var attn = attn_out_.forward(g, merged);
    if (training && opts_.dropout_p > 0.0) {
        if (!rng) throw std::invalid_argument("attention block: training forward needs an rng");
        attn = g.dropout(attn, opts_.dropout_p, *rng, true);
    }
    x = g.add(x, attn);

    ad::Var h2 = g.layer_norm(x, g.param(ln2_gamma_), g.param(ln2_beta_));
    ad::Var z = g.gelu(mlp_fc_.forward(g, h2));
    z = mlp_proj_.forward(g, z);
    if (training && opts_.dropout_p > 0.0) z = g.dropout(z, opts_.dropout_p, *rng, true);
    return g.add(x, z);
}

void AttentionBlock::collect(std::vector<Parameter*>& out) {
    out.push_back(&ln1_gamma_);
    out.push_back(&ln1_beta_);
    out.push_back(&ln2_gamma_);
    out.push_back(&ln2_beta_);
    if (opts_.lora) {
        lora_q_->collect(out);
        lora_k_->collect(out);
        lora_v_->collect(out);
    } else {
        lin_q_->collect(out);
        lin_k_->collect(out);
        lin_v_->collect(out);
    }
    attn_out_.collect(out);
    mlp_fc_.collect(out);
    mlp_proj_.collect(out);
}

void AttentionBlock::reset_adapters(std::uint64_t seed) {
    if (!opts_.lora) return;
    Rng rng(seed);
    lora_q_->reset_adapter(rng.next_u64());
    lora_k_->reset_adapter(rng.next_u64());
    lora_v_->reset_adapter(rng.next_u64());
}

std::int64_t AttentionBlock::lora_param_count() const {
    if (!opts_.lora) return 0;
    return lora_q_->trainable_count() + lora_k_->trainable_count() + lora_v_->trainable_count();
}

}  // namespace ltsm
