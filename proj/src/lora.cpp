#include "ltsmdiff/lora.hpp"

#include <algorithm>

namespace ltsm {

LoRAAdapter LoRAAdapter::init(const std::string& name, Mat frozen_weight, Mat frozen_bias,
                              const LoRAConfig& config, std::uint64_t rng_seed) {
    config.validate();
    if (!all_finite(frozen_weight)) throw ConfigError("lora: frozen weight has non-finite entries");
    const int d_out = frozen_weight.rows();
    const int d_in = frozen_weight.cols();
    if (config.rank > std::min(d_in, d_out))
        throw ConfigError("lora: rank " + std::to_string(config.rank) + " exceeds min(d_in, d_out) = " +
                          std::to_string(std::min(d_in, d_out)));
    if (!frozen_bias.empty() && (frozen_bias.rows() != 1 || frozen_bias.cols() != d_out))
        throw ConfigError("lora: frozen bias must be 1x" + std::to_string(d_out));

    LoRAAdapter ad;
    ad.frozen_w_ = Parameter(name + ".weight", std::move(frozen_weight), /*train=*/false);
    ad.frozen_b_ = Parameter(name + ".bias", std::move(frozen_bias), /*train=*/false);
    ad.a_ = Parameter(name + ".lora_A", Mat(config.rank, d_in));
    ad.b_ = Parameter(name + ".lora_B", Mat(d_out, config.rank));
    ad.scaling_ = config.alpha / config.rank;
    ad.dropout_p_ = config.dropout_p;
    ad.reset_adapter(rng_seed);
    return ad;
}

void LoRAAdapter::reset_adapter(std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    for (std::size_t i = 0; i < a_.value.size(); ++i) a_.value[i] = rng.normal(0.0, 0.02);
    b_.value.set_zero();
}

ad::Var LoRAAdapter::frozen_forward(ad::Graph& g, ad::Var x) {
    ad::Var w = g.param(frozen_w_);
    ad::Var y = g.matmul_nt(x, w);
    if (!frozen_b_.value.empty()) y = g.add_rowvec(y, g.param(frozen_b_));
    return y;
}

ad::Var LoRAAdapter::forward(ad::Graph& g, ad::Var x, bool training, Rng* dropout_rng) {
    ad::Var base = frozen_forward(g, x);
    ad::Var xin = x;
    if (training && dropout_p_ > 0.0) {
        if (!dropout_rng) throw std::invalid_argument("lora: training forward needs an rng");
        xin = g.dropout(x, dropout_p_, *dropout_rng, true);
    }
    ad::Var low = g.matmul_nt(xin, g.param(a_));   // n×r
    ad::Var delta = g.matmul_nt(low, g.param(b_));  // n×d_out
    return g.add(base, g.scale(delta, scaling_));
}

void LoRAAdapter::collect(std::vector<Parameter*>& out) {
    out.push_back(&frozen_w_);
    if (!frozen_b_.value.empty()) out.push_back(&frozen_b_);
    out.push_back(&a_);
    out.push_back(&b_);
}

}  // namespace ltsm
