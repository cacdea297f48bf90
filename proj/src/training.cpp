#include "ltsmdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltsm {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (lambda < 0) throw ConfigError("train: lambda must be >= 0");
    if (pretrain_epochs < 0) throw ConfigError("train: pretrain_epochs must be >= 0");
    if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
    if (finetune_scope != "all" && finetune_scope != "lora_only")
        throw ConfigError("train: finetune_scope must be 'all' or 'lora_only'");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"lambda", c.lambda},
         {"pretrain_epochs", c.pretrain_epochs},
         {"seed", c.seed},
         {"grad_clip", c.grad_clip},
         {"detach_condition", c.detach_condition},
         {"channel_mean", c.channel_mean},
         {"loss_reduction", c.loss_reduction == LossReduction::kMean ? "mean" : "sum"},
         {"finetune_scope", c.finetune_scope},
         {"reproject_on_channel_mismatch", c.reproject_on_channel_mismatch},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.lambda = j.value("lambda", c.lambda);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.seed = j.value("seed", c.seed);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.detach_condition = j.value("detach_condition", c.detach_condition);
    c.channel_mean = j.value("channel_mean", c.channel_mean);
    const std::string red = j.value("loss_reduction", std::string("mean"));
    if (red != "mean" && red != "sum") throw ConfigError("train: loss_reduction must be mean|sum");
    c.loss_reduction = red == "mean" ? LossReduction::kMean : LossReduction::kSum;
    c.finetune_scope = j.value("finetune_scope", c.finetune_scope);
    c.reproject_on_channel_mismatch =
        j.value("reproject_on_channel_mismatch", c.reproject_on_channel_mismatch);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_)
        if (!p->trainable)
            throw ConfigError("optimizer given frozen tensor '" + p->name + "'");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void AdamOptimizer::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

void AdamOptimizer::step(double grad_clip) {
    if (grad_clip > 0.0) {
        double total = 0.0;
        for (auto* p : params_) {
            p->ensure_grad();
            total += sq_norm(p->grad);
        }
        const double norm = std::sqrt(total);
        if (norm > grad_clip) {
            const double s = grad_clip / norm;
            for (auto* p : params_)
                for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter* p = params_[k];
        p->ensure_grad();
        Mat& m = m_[k];
        Mat& v = v_[k];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p->value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

namespace {

enum class LossMode { kJoint, kEncoderOnly };

struct ExampleLosses {
    double total = 0, llm = 0, diff = 0;
};

// Builds the per-example loss graph. When `graph` has gradients enabled the
// caller is expected to run backward on `loss_node` afterwards.
ExampleLosses example_losses(ad::Graph& g, ForecastModel& model, const WindowPair& w,
                             const TrainConfig& cfg, LossMode mode, bool training, Rng& model_rng,
                             Rng& diff_rng, ad::Var* loss_node) {
    ad::Var x0 = model.encoder.encode(g, w.context, training, &model_rng);
    ad::Var forecast = model.encoder.head_forecast(g, x0);
    ad::Var l_llm = Encoder::loss(g, forecast, w.target, cfg.channel_mean);

    ExampleLosses out;
    out.llm = g.scalar(l_llm);
    ad::Var total = l_llm;

    const bool joint = mode == LossMode::kJoint && model.denoiser && cfg.lambda > 0.0;
    if (joint) {
        const NoiseSchedule& s = model.schedule;
        const DualTimestep ts = sample_timesteps(diff_rng, s.steps);
        const Mat& x0v = g.value(x0);
        const Mat eps_x = diff_rng.normal_mat(x0v.rows(), x0v.cols());
        const Mat eps_y = diff_rng.normal_mat(w.target.rows(), w.target.cols());
        ad::Var cond = cfg.detach_condition ? g.input(x0v) : x0;
        ad::Var x_noisy = forward_noise(g, cond, ts.t_x, eps_x, s);
        ad::Var y_noisy = forward_noise(g, g.input(w.target), ts.t_y, eps_y, s);
        auto [ex_hat, ey_hat] =
            model.denoiser->predict_noise(g, x_noisy, y_noisy, ts.t_x, ts.t_y, training, &model_rng);
        ad::Var l_diff = diffusion_loss(g, ex_hat, ey_hat, eps_x, eps_y, cfg.loss_reduction);
        out.diff = g.scalar(l_diff);
        total = total_loss(g, l_llm, l_diff, cfg.lambda);
    }
    out.total = g.scalar(total);
    if (loss_node) *loss_node = total;
    return out;
}

std::vector<Parameter*> scoped_trainables(ForecastModel& model, LossMode mode,
                                          const std::string& scope) {
    std::vector<Parameter*> out;
    auto want = [&](Parameter* p) {
        if (!p->trainable) return false;
        if (scope == "lora_only")
            return p->name.find(".lora_") != std::string::npos;
        return true;
    };
    if (mode == LossMode::kEncoderOnly) {
        for (auto* p : model.encoder.params())
            if (want(p)) out.push_back(p);
    } else {
        for (auto* p : model.all_params())
            if (want(p)) out.push_back(p);
    }
    if (out.empty()) throw ConfigError("training: no trainable tensors in scope");
    return out;
}

ExampleLosses eval_losses(ForecastModel& model, const std::vector<WindowPair>& windows,
                          const TrainConfig& cfg, LossMode mode, Rng& val_rng) {
    ExampleLosses acc;
    Rng dummy(0);
    for (const auto& w : windows) {
        ad::Graph g(/*grad_enabled=*/false);
        const ExampleLosses e =
            example_losses(g, model, w, cfg, mode, /*training=*/false, dummy, val_rng, nullptr);
        acc.total += e.total;
        acc.llm += e.llm;
        acc.diff += e.diff;
    }
    const double n = static_cast<double>(windows.size());
    acc.total /= n;
    acc.llm /= n;
    acc.diff /= n;
    return acc;
}

TrainResult train_loop(ForecastModel& model, const std::vector<WindowPair>& train,
                       const std::vector<WindowPair>& val, const TrainConfig& cfg, LossMode mode,
                       const std::string& scope) {
    cfg.validate();
    if (train.empty()) throw ConfigError("training: empty train set");
    for (const auto& w : train)
        if (w.lookback() != model.config.encoder.lookback ||
            w.horizon() != model.config.encoder.horizon ||
            w.channels() != model.config.encoder.channels)
            throw ConfigError("training: window shape does not match model config");

    auto trainables = scoped_trainables(model, mode, scope);
    AdamOptimizer opt(trainables, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    Rng data_rng = Rng::derive(cfg.seed, 101);
    Rng model_rng = Rng::derive(cfg.seed, 102);
    Rng diff_rng = Rng::derive(cfg.seed, 103);

    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();
    std::vector<Mat> best_values;
    auto all_params = model.all_params();
    auto snapshot = [&] {
        best_values.clear();
        best_values.reserve(all_params.size());
        for (auto* p : all_params) best_values.push_back(p->value);
    };

    int bad_epochs = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Fisher–Yates with our own rng keeps the batch order reproducible.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[data_rng.uniform_int(0, static_cast<int>(i) - 1)]);

        double ep_total = 0, ep_llm = 0, ep_diff = 0;
        int n_batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t bend = std::min(order.size(), at + cfg.batch_size);
            const double bsize = static_cast<double>(bend - at);
            opt.zero_grad();
            StepRecord rec;
            for (std::size_t k = at; k < bend; ++k) {
                const WindowPair& w = train[order[k]];
                ad::Graph g;
                ad::Var loss_node;
                const ExampleLosses e = example_losses(g, model, w, cfg, mode, /*training=*/true,
                                                       model_rng, diff_rng, &loss_node);
                if (!std::isfinite(e.total))
                    throw std::runtime_error(
                        "training: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(n_batches) + " (llm=" + std::to_string(e.llm) +
                        ", diff=" + std::to_string(e.diff) + ")");
                g.backward(g.scale(loss_node, 1.0 / bsize));
                rec.total += e.total / bsize;
                rec.llm += e.llm / bsize;
                rec.diff += e.diff / bsize;
            }
            opt.step(cfg.grad_clip);
            result.steps.push_back(rec);
            ep_total += rec.total;
            ep_llm += rec.llm;
            ep_diff += rec.diff;
            ++n_batches;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.train_total = ep_total / n_batches;
        er.train_llm = ep_llm / n_batches;
        er.train_diff = ep_diff / n_batches;

        if (!val.empty()) {
            Rng val_rng = Rng::derive(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch));
            const ExampleLosses v = eval_losses(model, val, cfg, mode, val_rng);
            er.val_total = v.total;
            er.val_llm = v.llm;
            er.val_diff = v.diff;
        } else {
            er.val_total = er.train_total;
            er.val_llm = er.train_llm;
            er.val_diff = er.train_diff;
        }
        result.history.push_back(er);

        if (er.val_total < result.best_val) {
            result.best_val = er.val_total;
            result.best_epoch = epoch;
            snapshot();
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= cfg.patience) break;
        }
    }

    if (!best_values.empty())
        for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best_values[i];
    return result;
}

}  // namespace

TrainResult train_joint(ForecastModel& model, const std::vector<WindowPair>& train,
                        const std::vector<WindowPair>& val, const TrainConfig& config) {
    return train_loop(model, train, val, config, LossMode::kJoint, "all");
}

TrainResult pretrain_encoder(ForecastModel& model, const std::vector<WindowPair>& train,
                             const std::vector<WindowPair>& val, const TrainConfig& config) {
    return train_loop(model, train, val, config, LossMode::kEncoderOnly, "all");
}

TrainResult fine_tune_fewshot(ForecastModel& model, const std::vector<WindowPair>& target_train,
                              const std::vector<WindowPair>& target_val, double ratio,
                              const TrainConfig& config) {
    const auto subset = subsample_fewshot(target_train, ratio);
    if (!subset.empty() && subset[0].channels() != model.config.encoder.channels)
        throw ConfigError(
            "fine_tune_fewshot: target channel count differs from model; enable "
            "reproject_on_channel_mismatch and rebuild via reproject_channels()");
    return train_loop(model, subset, target_val, config, LossMode::kJoint,
                      config.finetune_scope);
}

ForecastModel reproject_channels(ForecastModel& source, int new_channels, std::uint64_t seed) {
    ModelConfig cfg = source.config;
    cfg.encoder.channels = new_channels;
    cfg.finalize();
    ForecastModel out(cfg, seed);
    // Carry over every tensor whose shape survived the channel change; the
    // input projection, head, and denoiser target projections stay fresh.
    std::vector<Parameter*> src = source.all_params();
    std::vector<Parameter*> dst = out.all_params();
    if (src.size() != dst.size())
        throw std::logic_error("reproject_channels: parameter lists diverge");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i]->name != dst[i]->name)
            throw std::logic_error("reproject_channels: parameter order diverges");
        if (src[i]->value.same_shape(dst[i]->value)) dst[i]->value = src[i]->value;
    }
    out.schedule = source.schedule;
    return out;
}

}  // namespace ltsm
