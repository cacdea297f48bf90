#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ltsmdiff/model.hpp"
#include "ltsmdiff/training.hpp"

namespace ltsm {

/// Element-mean squared / absolute error.
double mse(const Mat& pred, const Mat& truth);
double mae(const Mat& pred, const Mat& truth);

struct MetricReport {
    std::vector<int> horizons;
    std::vector<double> mse_per_horizon;
    std::vector<double> mae_per_horizon;
    double mse_avg = 0;
    double mae_avg = 0;
    std::string dataset;
    std::string config_hash;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Hex FNV-1a of a JSON document; stamped into reports so rows are traceable
/// to the exact configuration that produced them.
std::string config_hash(const nlohmann::json& j);

/// Produces one H×d prediction (normalized units) for a test window.
using ForecastFn = std::function<Mat(const WindowPair& window, int window_index)>;

/// Metric computation against a pluggable forecaster; horizons ≤ H evaluate
/// truncated prefixes of the prediction.
MetricReport evaluate_with(const ForecastFn& forecast, const std::vector<WindowPair>& test,
                           std::vector<int> horizons, const std::string& dataset = "");

/// Full-model evaluation: ensemble-mean forecasts when a denoiser is
/// attached, the encoder head otherwise. Each window's sampler stream is
/// derived from (config seed, window index).
MetricReport evaluate(ForecastModel& model, const std::vector<WindowPair>& test,
                      const SamplerConfig& sampler, std::vector<int> horizons = {},
                      bool metrics_on_normalized = true, const std::string& dataset = "");

struct TransferRow {
    double ratio = 1.0;
    MetricReport report;
};

/// Few-shot transfer protocol: for each ratio, copy the source model,
/// fine-tune on the subsampled target train split, evaluate on the full
/// target test split.
std::vector<TransferRow> run_transfer(ForecastModel& source,
                                      const std::vector<WindowPair>& target_train,
                                      const std::vector<WindowPair>& target_val,
                                      const std::vector<WindowPair>& target_test,
                                      const std::vector<double>& ratios, const TrainConfig& train,
                                      const SamplerConfig& sampler,
                                      bool metrics_on_normalized = true,
                                      const std::string& dataset = "");

struct AblationPlan {
    std::vector<std::string> variants{"ltsm_only", "ltsm_plus_diffusion"};
    std::vector<int> layer_sweep{1, 3, 6, 9, 12};
    void validate() const;
};

struct AblationRow {
    std::string label;
    std::string status;  // "ok" or "unimplemented"
    MetricReport report;
    std::uint64_t window_hash = 0;
};

/// Trains and evaluates each plan cell on identical splits and seeds.
/// ltsm_only builds no denoiser; variants needing external systems are
/// emitted as unimplemented rows so the table shape is complete.
std::vector<AblationRow> run_ablation(const AblationPlan& plan, const ModelConfig& base,
                                      const TrainConfig& train, const SamplerConfig& sampler,
                                      const std::vector<WindowPair>& train_windows,
                                      const std::vector<WindowPair>& val_windows,
                                      const std::vector<WindowPair>& test_windows,
                                      bool metrics_on_normalized = true,
                                      const std::string& dataset = "");

std::string format_transfer_table(const std::vector<TransferRow>& rows);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace ltsm
