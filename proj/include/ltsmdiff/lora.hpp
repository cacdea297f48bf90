#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltsmdiff/errors.hpp"
#include "ltsmdiff/graph.hpp"
#include "ltsmdiff/mat.hpp"
#include "ltsmdiff/rng.hpp"

namespace ltsm {

struct LoRAConfig {
    int rank = 8;
    double alpha = 32.0;
    double dropout_p = 0.1;
    void validate() const {
        if (rank < 1) throw ConfigError("lora: rank must be >= 1");
        if (alpha <= 0) throw ConfigError("lora: alpha must be > 0");
        if (dropout_p < 0 || dropout_p >= 1) throw ConfigError("lora: dropout must be in [0, 1)");
    }
};

/// Low-rank adapter around a frozen linear projection:
///   y = x·Wᵀ + bias + (α/r)·(drop(x)·Aᵀ)·Bᵀ
/// with W (d_out×d_in) and bias frozen, A (r×d_in) Gaussian-initialized,
/// B (d_out×r) zero-initialized so the adapted and frozen paths agree
/// exactly at initialization. Only A and B train.
class LoRAAdapter {
public:
    LoRAAdapter() = default;

    /// `frozen_bias` may be empty (no bias). Throws ConfigError when
    /// rank > min(d_in, d_out).
    static LoRAAdapter init(const std::string& name, Mat frozen_weight, Mat frozen_bias,
                            const LoRAConfig& config, std::uint64_t rng_seed);

    /// x: batch of row vectors (n×d_in) → n×d_out. Dropout applies to the
    /// adapter input only, and only when training.
    ad::Var forward(ad::Graph& g, ad::Var x, bool training = false, Rng* dropout_rng = nullptr);

    /// Frozen path only (for zero-init equivalence checks).
    ad::Var frozen_forward(ad::Graph& g, ad::Var x);

    /// Re-draws A (std 0.02) and zeroes B; used after backbone reloads.
    void reset_adapter(std::uint64_t rng_seed);

    std::int64_t trainable_count() const {
        return static_cast<std::int64_t>(a_.value.size()) + static_cast<std::int64_t>(b_.value.size());
    }

    int d_in() const { return frozen_w_.value.cols(); }
    int d_out() const { return frozen_w_.value.rows(); }
    double scaling() const { return scaling_; }

    Parameter& frozen_weight() { return frozen_w_; }
    Parameter& frozen_bias() { return frozen_b_; }
    Parameter& lora_a() { return a_; }
    Parameter& lora_b() { return b_; }
    const Parameter& lora_a() const { return a_; }
    const Parameter& lora_b() const { return b_; }

    void collect(std::vector<Parameter*>& out);

private:
    Parameter frozen_w_;
    Parameter frozen_b_;  // empty value when the projection has no bias
    Parameter a_;
    Parameter b_;
    double scaling_ = 0.0;
    double dropout_p_ = 0.0;
};

}  // namespace ltsm
