#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltsmdiff/graph.hpp"
#include "ltsmdiff/lora.hpp"
#include "ltsmdiff/rng.hpp"

namespace ltsm {

/// Plain linear layer, y = x·Wᵀ + b with W stored d_out×d_in.
struct Linear {
    Parameter weight;
    Parameter bias;

    static Linear init(const std::string& name, int d_in, int d_out, Rng& rng,
                       double init_std = 0.02, bool trainable = true, bool with_bias = true);
    ad::Var forward(ad::Graph& g, ad::Var x);
    void collect(std::vector<Parameter*>& out);
    std::int64_t param_count() const {
        return static_cast<std::int64_t>(weight.value.size()) +
               static_cast<std::int64_t>(bias.value.size());
    }
};

/// Additive attention mask: 0 on and below the diagonal, -1e30 above.
Mat causal_mask(int seq_len);

struct AttentionBlockOptions {
    int width = 64;
    int n_heads = 4;
    bool causal = false;
    double dropout_p = 0.0;
    /// When set, the base q/k/v/out/mlp/norm weights are frozen and q, k, v
    /// carry trainable low-rank adapters (GPT-2 backbone blocks).
    std::optional<LoRAConfig> lora;
};

/// Pre-norm transformer block:
///   x = x + drop(Attn(LN1(x)));  x = x + drop(MLP(LN2(x)))
/// with multi-head self-attention and a GELU MLP of width 4×.
class AttentionBlock {
public:
    AttentionBlock() = default;
    AttentionBlock(const std::string& prefix, const AttentionBlockOptions& opts, Rng& init_rng);

    ad::Var forward(ad::Graph& g, ad::Var x, bool training = false, Rng* rng = nullptr);
    void collect(std::vector<Parameter*>& out);
    void reset_adapters(std::uint64_t seed);
    std::int64_t lora_param_count() const;

    const AttentionBlockOptions& options() const { return opts_; }

private:
    ad::Var project_qkv(ad::Graph& g, ad::Var h, int which, bool training, Rng* rng);

    AttentionBlockOptions opts_;
    Parameter ln1_gamma_, ln1_beta_, ln2_gamma_, ln2_beta_;
    // Exactly one of (lin_q_..) / (lora_q_..) is populated per the options.
    std::optional<Linear> lin_q_, lin_k_, lin_v_;
    std::optional<LoRAAdapter> lora_q_, lora_k_, lora_v_;
    Linear attn_out_;
    Linear mlp_fc_;
    Linear mlp_proj_;
};

}  // namespace ltsm
