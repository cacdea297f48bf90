#pragma once

#include <string>
#include <vector>

#include "ltsmdiff/model.hpp"

namespace ltsm {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 0.0005;
    int max_epochs = 20;
    int patience = 5;
    double lambda = 1.0;       // weight of the noise-matching loss
    int pretrain_epochs = 0;   // encoder-only epochs before joint training
    std::uint64_t seed = 0;
    double grad_clip = 1.0;    // global-norm clip; 0 disables
    bool detach_condition = false;  // stop L_diff gradients at the representation
    bool channel_mean = true;       // divide the forecast loss by d as well as H
    LossReduction loss_reduction = LossReduction::kMean;
    std::string finetune_scope = "all";  // "all" | "lora_only"
    bool reproject_on_channel_mismatch = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Adam over a fixed trainable-parameter list; frozen tensors are rejected
/// at construction so a step can never touch them.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);
    void zero_grad();
    /// Applies one update from the accumulated grads; clips the global
    /// gradient norm first when grad_clip > 0.
    void step(double grad_clip = 0.0);
    long steps_taken() const { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Mat> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

struct StepRecord {
    double total = 0, llm = 0, diff = 0;
};
struct EpochRecord {
    int epoch = 0;
    double train_total = 0, train_llm = 0, train_diff = 0;
    double val_total = 0, val_llm = 0, val_diff = 0;
};
struct TrainResult {
    std::vector<EpochRecord> history;
    std::vector<StepRecord> steps;  // one per optimizer step (batch)
    double best_val = 0;
    int best_epoch = -1;
};

/// Joint training on L = L_llm + λ·L_diff (per batch: encode, forecast,
/// dual-timestep noising, UViT prediction, one Adam step on trainables).
/// Early-stops on validation total loss; the model is left at the best-
/// validation parameters.
TrainResult train_joint(ForecastModel& model, const std::vector<WindowPair>& train,
                        const std::vector<WindowPair>& val, const TrainConfig& config);

/// Encoder-only pretraining on the forecast loss; denoiser tensors are not
/// touched.
TrainResult pretrain_encoder(ForecastModel& model, const std::vector<WindowPair>& train,
                             const std::vector<WindowPair>& val, const TrainConfig& config);

/// Transfers a model to a target dataset: subsamples the target train split
/// to `ratio`, then fine-tunes (scope per config.finetune_scope).
TrainResult fine_tune_fewshot(ForecastModel& model, const std::vector<WindowPair>& target_train,
                              const std::vector<WindowPair>& target_val, double ratio,
                              const TrainConfig& config);

/// Rebuilds a model for a different channel count: the input projection,
/// forecast head, and denoiser target projections are freshly initialized;
/// every other tensor carries over.
ForecastModel reproject_channels(ForecastModel& source, int new_channels, std::uint64_t seed);

}  // namespace ltsm
