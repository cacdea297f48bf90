#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltsmdiff/archive.hpp"
#include "ltsmdiff/nn.hpp"

namespace ltsm {

struct EncoderConfig {
    int channels = 7;       // d
    int width = 64;         // m, embedding width
    int n_heads = 4;
    double dropout_p = 0.3;
    int n_blocks = 6;       // backbone depth (0 allowed for degenerate testing)
    LoRAConfig lora;
    int max_context = 256;
    int lookback = 96;      // T
    int horizon = 96;       // H

    void validate() const;
};

/// Temporal encoder: a trainable embedding (linear d→m projection, learned
/// positions, one local transformer layer) feeding a stack of frozen causal
/// transformer blocks whose q/k/v projections carry LoRA adapters. A linear
/// head maps the flattened representation to an H×d forecast.
class Encoder {
public:
    Encoder(EncoderConfig cfg, std::uint64_t seed);

    /// Embedding module only: projection + positions + local layer. T'×d → T'×m.
    ad::Var embed(ad::Graph& g, const Mat& x, bool training = false, Rng* rng = nullptr);

    /// Full temporal representation (embedding + backbone blocks). Raises a
    /// runtime error naming the block if an intermediate goes non-finite.
    ad::Var encode(ad::Graph& g, const Mat& x, bool training = false, Rng* rng = nullptr);

    /// Forecast head applied to a T×m representation; returns H×d.
    ad::Var head_forecast(ad::Graph& g, ad::Var repr);

    Mat encode_eval(const Mat& x);
    Mat forecast_eval(const Mat& x);

    /// Mean-squared forecast loss over the horizon: sum of squared errors
    /// divided by H, and additionally by d when channel_mean is set.
    static ad::Var loss(ad::Graph& g, ad::Var forecast, const Mat& target, bool channel_mean = true);

    void collect_params(std::vector<Parameter*>& out);
    std::vector<Parameter*> params();

    struct ParamBreakdown {
        std::int64_t lora = 0;
        std::int64_t embedding = 0;
        std::int64_t head = 0;
        std::int64_t frozen = 0;
        std::int64_t trainable_total() const { return lora + embedding + head; }
    };
    ParamBreakdown parameter_breakdown();

    /// Copies frozen backbone tensors out of / into a tensor archive
    /// (names block<i>.*). Loading validates names and shapes, listing every
    /// offending tensor, and then re-initializes the LoRA adapters.
    void save_backbone(TensorArchive& archive);
    void load_backbone(const TensorArchive& archive, std::uint64_t adapter_seed);

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    Linear in_proj_;
    Parameter pos_;
    AttentionBlock local_layer_;
    std::vector<AttentionBlock> blocks_;
    Linear head_;
};

}  // namespace ltsm
