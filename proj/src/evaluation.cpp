#include "ltsmdiff/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ltsm {

double mse(const Mat& pred, const Mat& truth) {
    check_same_shape(pred, truth, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

double mae(const Mat& pred, const Mat& truth) {
    check_same_shape(pred, truth, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < horizons.size(); ++i)
        per.push_back({{"horizon", horizons[i]},
                       {"mse", mse_per_horizon[i]},
                       {"mae", mae_per_horizon[i]}});
    return {{"per_horizon", per}, {"mse_avg", mse_avg},       {"mae_avg", mae_avg},
            {"dataset", dataset}, {"config_hash", config_hash}, {"seed", seed}};
}

std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

MetricReport evaluate_with(const ForecastFn& forecast, const std::vector<WindowPair>& test,
                           std::vector<int> horizons, const std::string& dataset) {
    if (test.empty()) throw ConfigError("evaluate: empty test set");
    const int full_h = test[0].horizon();
    if (horizons.empty()) horizons = {full_h};
    for (int h : horizons)
        if (h < 1 || h > full_h)
            throw ConfigError("evaluate: horizon " + std::to_string(h) + " exceeds model horizon " +
                              std::to_string(full_h));

    MetricReport report;
    report.dataset = dataset;
    report.horizons = horizons;
    std::vector<double> se(horizons.size(), 0.0), ae(horizons.size(), 0.0);
    std::vector<double> count(horizons.size(), 0.0);

    for (int wi = 0; wi < static_cast<int>(test.size()); ++wi) {
        const WindowPair& w = test[wi];
        const Mat pred = forecast(w, wi);
        check_same_shape(pred, w.target, "evaluate forecast");
        for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
            const int h = horizons[hi];
            for (int i = 0; i < h; ++i)
                for (int c = 0; c < pred.cols(); ++c) {
                    const double e = pred(i, c) - w.target(i, c);
                    se[hi] += e * e;
                    ae[hi] += std::abs(e);
                    count[hi] += 1.0;
                }
        }
    }

    report.mse_per_horizon.resize(horizons.size());
    report.mae_per_horizon.resize(horizons.size());
    for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
        report.mse_per_horizon[hi] = se[hi] / count[hi];
        report.mae_per_horizon[hi] = ae[hi] / count[hi];
        report.mse_avg += report.mse_per_horizon[hi];
        report.mae_avg += report.mae_per_horizon[hi];
    }
    report.mse_avg /= static_cast<double>(horizons.size());
    report.mae_avg /= static_cast<double>(horizons.size());
    return report;
}

MetricReport evaluate(ForecastModel& model, const std::vector<WindowPair>& test,
                      const SamplerConfig& sampler, std::vector<int> horizons,
                      bool metrics_on_normalized, const std::string& dataset) {
    const bool denorm = !metrics_on_normalized && model.stats.channels() > 0;
    ForecastFn fn = [&](const WindowPair& w, int wi) {
        Mat pred;
        if (model.denoiser) {
            SamplerConfig per_window = sampler;
            per_window.seed = Rng::derive(sampler.seed, static_cast<std::uint64_t>(wi)).next_u64();
            pred = model.forecast(w.context, per_window, /*denormalize_outputs=*/false).mean;
        } else {
            pred = model.encoder.forecast_eval(w.context);
        }
        return denorm ? denormalize(pred, model.stats) : pred;
    };
    auto targets_adjusted = test;
    if (denorm)
        for (auto& w : targets_adjusted) w.target = denormalize(w.target, model.stats);

    MetricReport report = evaluate_with(fn, targets_adjusted, std::move(horizons), dataset);
    report.seed = sampler.seed;
    nlohmann::json hash_src = {{"model", model.config}, {"seed", sampler.seed}};
    report.config_hash = config_hash(hash_src);
    return report;
}

std::vector<TransferRow> run_transfer(ForecastModel& source,
                                      const std::vector<WindowPair>& target_train,
                                      const std::vector<WindowPair>& target_val,
                                      const std::vector<WindowPair>& target_test,
                                      const std::vector<double>& ratios, const TrainConfig& train,
                                      const SamplerConfig& sampler, bool metrics_on_normalized,
                                      const std::string& dataset) {
    if (ratios.empty()) throw ConfigError("run_transfer: no ratios given");
    if (target_train.empty() || target_test.empty())
        throw ConfigError("run_transfer: target train/test windows required");

    std::vector<TransferRow> rows;
    for (double ratio : ratios) {
        ForecastModel tuned = source;
        if (target_train[0].channels() != tuned.config.encoder.channels) {
            if (!train.reproject_on_channel_mismatch)
                throw ConfigError(
                    "run_transfer: target channels differ from source; set "
                    "reproject_on_channel_mismatch");
            tuned = reproject_channels(source, target_train[0].channels(), train.seed);
        }
        fine_tune_fewshot(tuned, target_train, target_val, ratio, train);
        TransferRow row;
        row.ratio = ratio;
        row.report = evaluate(tuned, target_test, sampler, {}, metrics_on_normalized, dataset);
        rows.push_back(std::move(row));
    }
    return rows;
}

void AblationPlan::validate() const {
    if (variants.empty() && layer_sweep.empty()) throw ConfigError("ablation: empty plan");
    for (int l : layer_sweep)
        if (l < 0 || l > 12) throw ConfigError("ablation: layer count must be in [0, 12]");
}

namespace {

MetricReport train_and_eval_cell(const ModelConfig& cfg, const TrainConfig& train,
                                 const SamplerConfig& sampler,
                                 const std::vector<WindowPair>& train_windows,
                                 const std::vector<WindowPair>& val_windows,
                                 const std::vector<WindowPair>& test_windows,
                                 bool metrics_on_normalized, const std::string& dataset) {
    ForecastModel model(cfg, train.seed);
    if (cfg.with_denoiser)
        train_joint(model, train_windows, val_windows, train);
    else
        pretrain_encoder(model, train_windows, val_windows, train);
    return evaluate(model, test_windows, sampler, {}, metrics_on_normalized, dataset);
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblationPlan& plan, const ModelConfig& base,
                                      const TrainConfig& train, const SamplerConfig& sampler,
                                      const std::vector<WindowPair>& train_windows,
                                      const std::vector<WindowPair>& val_windows,
                                      const std::vector<WindowPair>& test_windows,
                                      bool metrics_on_normalized, const std::string& dataset) {
    plan.validate();
    const std::uint64_t whash = window_set_hash(train_windows) ^
                                (window_set_hash(val_windows) * 3) ^
                                (window_set_hash(test_windows) * 7);

    std::vector<AblationRow> rows;
    auto add_cell = [&](const std::string& label, const ModelConfig& cfg) {
        AblationRow row;
        row.label = label;
        row.status = "ok";
        row.window_hash = whash;
        row.report = train_and_eval_cell(cfg, train, sampler, train_windows, val_windows,
                                         test_windows, metrics_on_normalized, dataset);
        rows.push_back(std::move(row));
    };

    for (const auto& variant : plan.variants) {
        if (variant == "ltsm_only") {
            ModelConfig cfg = base;
            cfg.with_denoiser = false;
            add_cell("ltsm_only", cfg);
        } else if (variant == "ltsm_plus_diffusion") {
            ModelConfig cfg = base;
            cfg.with_denoiser = true;
            add_cell("ltsm_plus_diffusion", cfg);
        } else {
            // Variants that need external systems stay in the table as
            // explicit placeholders.
            AblationRow row;
            row.label = variant;
            row.status = "unimplemented";
            row.window_hash = whash;
            rows.push_back(std::move(row));
        }
    }

    for (int layers : plan.layer_sweep) {
        ModelConfig cfg = base;
        cfg.with_denoiser = true;
        cfg.encoder.n_blocks = layers;
        add_cell("layers_" + std::to_string(layers), cfg);
    }
    return rows;
}

std::string format_transfer_table(const std::vector<TransferRow>& rows) {
    std::ostringstream os;
    os << "ratio     mse       mae\n";
    char buf[80];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-8.4g  %-8.4f  %-8.4f\n", r.ratio, r.report.mse_avg,
                      r.report.mae_avg);
        os << buf;
    }
    return os.str();
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant                mse       mae       status\n";
    char buf[120];
    for (const auto& r : rows) {
        if (r.status == "ok")
            std::snprintf(buf, sizeof(buf), "%-21s  %-8.4f  %-8.4f  %s\n", r.label.c_str(),
                          r.report.mse_avg, r.report.mae_avg, r.status.c_str());
        else
            std::snprintf(buf, sizeof(buf), "%-21s  %-8s  %-8s  %s\n", r.label.c_str(), "-", "-",
                          r.status.c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace ltsm
