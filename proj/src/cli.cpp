#include "ltsmdiff/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ltsmdiff/evaluation.hpp"
#include "ltsmdiff/kernels.hpp"
#include "ltsmdiff/model.hpp"
#include "ltsmdiff/training.hpp"

namespace fs = std::filesystem;

namespace ltsm::cli {

namespace {

nlohmann::json default_values() {
    return {
        {"data.csv", ""},
        {"data.date_column", "date"},
        {"data.lookback", 96},
        {"data.horizon", 96},
        {"data.stride", 1},
        {"data.train_fraction", 0.7},
        {"data.val_fraction", 0.1},
        {"data.test_fraction", 0.2},
        {"data.metrics_on_normalized", true},
        {"encoder.width", 64},
        {"encoder.n_heads", 4},
        {"encoder.dropout", 0.3},
        {"encoder.n_blocks", 6},
        {"encoder.max_context", 512},
        {"lora.rank", 8},
        {"lora.alpha", 32.0},
        {"lora.dropout", 0.1},
        {"uvit.depth", 8},
        {"uvit.width", 256},
        {"uvit.n_heads", 4},
        {"uvit.time_embed_dim", 64},
        {"uvit.dropout", 0.0},
        {"schedule.steps", 1000},
        {"schedule.beta_start", 1e-4},
        {"schedule.beta_end", 0.02},
        {"train.batch_size", 32},
        {"train.learning_rate", 0.0005},
        {"train.max_epochs", 20},
        {"train.patience", 5},
        {"train.lambda", 1.0},
        {"train.pretrain_epochs", 0},
        {"train.grad_clip", 1.0},
        {"train.detach_condition", false},
        {"train.channel_mean", true},
        {"train.loss_reduction", "mean"},
        {"train.finetune_scope", "all"},
        {"train.reproject_on_channel_mismatch", false},
        {"sampler.kind", "ddpm"},
        {"sampler.steps", 0},
        {"sampler.eta", 0.0},
        {"sampler.ensemble_size", 20},
        {"sampler.trace_every", 1},
        {"forecast.checkpoint", ""},
        {"forecast.input_csv", ""},
        {"forecast.trace", false},
        {"evaluate.checkpoint", ""},
        {"transfer.source_checkpoint", ""},
        {"transfer.source_csv", ""},
        {"transfer.target_csv", ""},
        {"transfer.ratios", nlohmann::json::array({0.01, 0.05, 0.5, 1.0})},
        {"ablation.variants",
         nlohmann::json::array({"ltsm_only", "ltsm_plus_diffusion"})},
        {"ablation.layer_sweep", nlohmann::json::array({1, 3, 6, 9, 12})},
        {"run.output_dir", "runs"},
        {"run.name", ""},
        {"run.seed", 0},
        {"run.jobs", 0},
    };
}

}  // namespace

FlatConfig::FlatConfig() : values_(default_values()) {}

void FlatConfig::apply_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a flat JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!values_.contains(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
        values_[it.key()] = it.value();
    }
}

void FlatConfig::apply_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
    }
    apply_json(j);
}

void FlatConfig::apply_override(const std::string& key, const std::string& raw_value) {
    if (!values_.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(raw_value);
    } catch (...) {
        parsed = raw_value;  // bare strings pass through
    }
    values_[key] = parsed;
}

const nlohmann::json& FlatConfig::at(const std::string& key) const {
    if (!values_.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
    return values_[key];
}

bool FlatConfig::get_bool(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_boolean()) throw ConfigError("config: key '" + key + "' must be a boolean");
    return v.get<bool>();
}
int FlatConfig::get_int(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
    return v.get<int>();
}
double FlatConfig::get_double(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
    return v.get<double>();
}
std::string FlatConfig::get_string(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
    return v.get<std::string>();
}
std::vector<double> FlatConfig::get_double_list(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array");
    return v.get<std::vector<double>>();
}
std::vector<int> FlatConfig::get_int_list(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array");
    return v.get<std::vector<int>>();
}
std::vector<std::string> FlatConfig::get_string_list(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array");
    return v.get<std::vector<std::string>>();
}

namespace {

struct PreparedData {
    RawSeries raw;
    NormStats stats;
    std::vector<WindowPair> train, val, test;
};

SplitSpec split_from(const FlatConfig& cfg) {
    SplitSpec s;
    s.train_fraction = cfg.get_double("data.train_fraction");
    s.val_fraction = cfg.get_double("data.val_fraction");
    s.test_fraction = cfg.get_double("data.test_fraction");
    s.validate();
    return s;
}

PreparedData prepare_data(const std::string& csv_path, const FlatConfig& cfg, int lookback,
                          int horizon) {
    if (csv_path.empty()) throw ConfigError("missing dataset path (data.csv)");
    if (!fs::exists(csv_path)) throw ConfigError("dataset not found: " + csv_path);
    PreparedData out;
    out.raw = load_csv(csv_path, cfg.get_string("data.date_column"));
    const SplitSpec split = split_from(cfg);
    const int train_rows = std::max(
        1, static_cast<int>(out.raw.length() * split.train_fraction));
    out.stats = compute_norm_stats(out.raw, train_rows);
    const RawSeries normalized = normalize(out.raw, out.stats);
    const auto windows =
        make_windows(normalized, lookback, horizon, cfg.get_int("data.stride"));
    if (windows.empty())
        throw ConfigError("dataset too short: no complete window of " + std::to_string(lookback) +
                          "+" + std::to_string(horizon) + " rows");
    std::tie(out.train, out.val, out.test) = split_chronological(windows, split);
    return out;
}

ModelConfig model_config_from(const FlatConfig& cfg, int channels) {
    ModelConfig mc;
    mc.encoder.channels = channels;
    mc.encoder.width = cfg.get_int("encoder.width");
    mc.encoder.n_heads = cfg.get_int("encoder.n_heads");
    mc.encoder.dropout_p = cfg.get_double("encoder.dropout");
    mc.encoder.n_blocks = cfg.get_int("encoder.n_blocks");
    mc.encoder.max_context = cfg.get_int("encoder.max_context");
    mc.encoder.lookback = cfg.get_int("data.lookback");
    mc.encoder.horizon = cfg.get_int("data.horizon");
    mc.encoder.lora.rank = cfg.get_int("lora.rank");
    mc.encoder.lora.alpha = cfg.get_double("lora.alpha");
    mc.encoder.lora.dropout_p = cfg.get_double("lora.dropout");
    mc.uvit.depth = cfg.get_int("uvit.depth");
    mc.uvit.width = cfg.get_int("uvit.width");
    mc.uvit.n_heads = cfg.get_int("uvit.n_heads");
    mc.uvit.time_embed_dim = cfg.get_int("uvit.time_embed_dim");
    mc.uvit.dropout_p = cfg.get_double("uvit.dropout");
    mc.schedule_steps = cfg.get_int("schedule.steps");
    mc.beta_start = cfg.get_double("schedule.beta_start");
    mc.beta_end = cfg.get_double("schedule.beta_end");
    mc.finalize();
    return mc;
}

TrainConfig train_config_from(const FlatConfig& cfg) {
    TrainConfig tc;
    tc.batch_size = cfg.get_int("train.batch_size");
    tc.learning_rate = cfg.get_double("train.learning_rate");
    tc.max_epochs = cfg.get_int("train.max_epochs");
    tc.patience = cfg.get_int("train.patience");
    tc.lambda = cfg.get_double("train.lambda");
    tc.pretrain_epochs = cfg.get_int("train.pretrain_epochs");
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    tc.grad_clip = cfg.get_double("train.grad_clip");
    tc.detach_condition = cfg.get_bool("train.detach_condition");
    tc.channel_mean = cfg.get_bool("train.channel_mean");
    const std::string red = cfg.get_string("train.loss_reduction");
    if (red != "mean" && red != "sum")
        throw ConfigError("train.loss_reduction must be mean or sum");
    tc.loss_reduction = red == "mean" ? LossReduction::kMean : LossReduction::kSum;
    tc.finetune_scope = cfg.get_string("train.finetune_scope");
    tc.reproject_on_channel_mismatch = cfg.get_bool("train.reproject_on_channel_mismatch");
    tc.validate();
    return tc;
}

SamplerConfig sampler_config_from(const FlatConfig& cfg) {
    SamplerConfig sc;
    sc.kind = SamplerConfig::parse_kind(cfg.get_string("sampler.kind"));
    sc.steps = cfg.get_int("sampler.steps");
    sc.eta = cfg.get_double("sampler.eta");
    sc.ensemble_size = cfg.get_int("sampler.ensemble_size");
    sc.trace_every = cfg.get_int("sampler.trace_every");
    sc.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    return sc;
}

fs::path make_run_dir(const FlatConfig& cfg, const std::string& command) {
    fs::path base = cfg.get_string("run.output_dir");
    std::string name = cfg.get_string("run.name");
    if (name.empty()) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
        name = command + "-" + std::to_string(ms);
    }
    fs::path dir = base / name;
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << content;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

void write_manifest(const fs::path& dir, const std::string& command, const FlatConfig& cfg,
                    const std::vector<std::string>& artifacts) {
    nlohmann::json m = {{"command", command},
                        {"seed", cfg.get_int("run.seed")},
                        {"config_hash", config_hash(cfg.values())},
                        {"artifacts", artifacts}};
    write_json(dir / "MANIFEST.json", m);
}

std::string loss_history_csv(const TrainResult& result) {
    std::string out = "epoch,train_total,train_llm,train_diff,val_total,val_llm,val_diff\n";
    char buf[256];
    for (const auto& e : result.history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                      e.train_total, e.train_llm, e.train_diff, e.val_total, e.val_llm,
                      e.val_diff);
        out += buf;
    }
    return out;
}

int cmd_train(const FlatConfig& cfg) {
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    PreparedData data = prepare_data(cfg.get_string("data.csv"), cfg,
                                     cfg.get_int("data.lookback"), cfg.get_int("data.horizon"));
    ModelConfig mc = model_config_from(cfg, data.raw.channels());
    TrainConfig tc = train_config_from(cfg);

    ForecastModel model(mc, seed);
    model.stats = data.stats;

    TrainResult pretrain_result;
    if (tc.pretrain_epochs > 0) {
        TrainConfig pre = tc;
        pre.max_epochs = tc.pretrain_epochs;
        pretrain_result = pretrain_encoder(model, data.train, data.val, pre);
    }
    TrainResult result = train_joint(model, data.train, data.val, tc);

    const fs::path dir = make_run_dir(cfg, "train");
    nlohmann::json extra = {{"best_epoch", result.best_epoch},
                            {"best_val", result.best_val},
                            {"seed", seed},
                            {"rng_state", Rng::derive(seed, 0).state()}};
    save_checkpoint((dir / "checkpoint.ltsa").string(), model, extra);
    write_text(dir / "loss_history.csv", loss_history_csv(result));
    write_json(dir / "resolved_config.json", cfg.values());
    write_manifest(dir, "train", cfg,
                   {"checkpoint.ltsa", "loss_history.csv", "resolved_config.json"});

    std::cout << "train: " << result.history.size() << " epochs, best val loss " << result.best_val
              << " (epoch " << result.best_epoch << ")\n"
              << "artifacts in " << dir.string() << "\n";
    return 0;
}

std::string forecast_csv(const ForecastResult& fc) {
    std::string out = "horizon_index,channel,mean,band_low,band_high\n";
    char buf[256];
    for (int i = 0; i < fc.mean.rows(); ++i)
        for (int c = 0; c < fc.mean.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", i, c, fc.mean(i, c),
                          fc.trace.band_low(i, c), fc.trace.band_high(i, c));
            out += buf;
        }
    return out;
}

std::string trace_csv(const DenoiseTrace& trace) {
    std::string out = "step,horizon_index,channel,value\n";
    char buf[256];
    for (std::size_t s = 0; s < trace.intermediates.size(); ++s) {
        const Mat& m = trace.intermediates[s];
        for (int i = 0; i < m.rows(); ++i)
            for (int c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g\n", trace.steps[s], i, c, m(i, c));
                out += buf;
            }
    }
    return out;
}

nlohmann::json band_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}

int cmd_forecast(const FlatConfig& cfg) {
    const std::string ckpt_path = cfg.get_string("forecast.checkpoint");
    const std::string input_path = cfg.get_string("forecast.input_csv");
    if (ckpt_path.empty()) throw ConfigError("forecast: missing --checkpoint");
    if (input_path.empty()) throw ConfigError("forecast: missing --input CSV");
    if (!fs::exists(ckpt_path)) throw ConfigError("forecast: checkpoint not found: " + ckpt_path);
    if (!fs::exists(input_path)) throw ConfigError("forecast: input not found: " + input_path);

    ForecastModel model = load_checkpoint(ckpt_path);
    const RawSeries raw = load_csv(input_path, cfg.get_string("data.date_column"));
    const int lookback = model.config.encoder.lookback;
    if (raw.length() < lookback)
        throw ConfigError("forecast: insufficient context (" + std::to_string(raw.length()) +
                          " rows, need " + std::to_string(lookback) + ")");

    Mat context(lookback, raw.channels());
    for (int i = 0; i < lookback; ++i)
        for (int c = 0; c < raw.channels(); ++c)
            context(i, c) = raw.values(raw.length() - lookback + i, c);
    if (model.stats.channels() > 0) context = normalize(context, model.stats);

    SamplerConfig sc = sampler_config_from(cfg);
    const ForecastResult fc = model.forecast(context, sc);

    const fs::path dir = make_run_dir(cfg, "forecast");
    std::vector<std::string> artifacts = {"forecast.csv", "resolved_config.json"};
    write_text(dir / "forecast.csv", forecast_csv(fc));
    if (cfg.get_bool("forecast.trace")) {
        write_text(dir / "trace.csv", trace_csv(fc.trace));
        nlohmann::json sidecar = {{"seed", cfg.get_int("run.seed")},
                                  {"sampler", {{"kind", cfg.get_string("sampler.kind")},
                                               {"steps", sc.steps},
                                               {"eta", sc.eta},
                                               {"ensemble_size", sc.ensemble_size},
                                               {"trace_every", sc.trace_every}}},
                                  {"band_low", band_json(fc.trace.band_low)},
                                  {"band_high", band_json(fc.trace.band_high)},
                                  {"initial_ltsm_forecast", band_json(fc.trace.initial_ltsm_forecast)}};
        write_json(dir / "trace.json", sidecar);
        artifacts.push_back("trace.csv");
        artifacts.push_back("trace.json");
    }
    write_json(dir / "resolved_config.json", cfg.values());
    write_manifest(dir, "forecast", cfg, artifacts);
    std::cout << "forecast written to " << (dir / "forecast.csv").string() << "\n";
    return 0;
}

int cmd_evaluate(const FlatConfig& cfg) {
    const std::string ckpt_path = cfg.get_string("evaluate.checkpoint");
    if (ckpt_path.empty()) throw ConfigError("evaluate: missing --checkpoint");
    if (!fs::exists(ckpt_path)) throw ConfigError("evaluate: checkpoint not found: " + ckpt_path);
    ForecastModel model = load_checkpoint(ckpt_path);

    const std::string csv = cfg.get_string("data.csv");
    if (csv.empty()) throw ConfigError("missing dataset path (data.csv)");
    if (!fs::exists(csv)) throw ConfigError("dataset not found: " + csv);
    const RawSeries raw = load_csv(csv, cfg.get_string("data.date_column"));
    if (raw.channels() != model.config.encoder.channels)
        throw ConfigError("evaluate: dataset has " + std::to_string(raw.channels()) +
                          " channels, model expects " +
                          std::to_string(model.config.encoder.channels));
    const NormStats stats = model.stats.channels() > 0
                                ? model.stats
                                : compute_norm_stats(raw, std::max(1, raw.length() * 7 / 10));
    const RawSeries normalized = normalize(raw, stats);
    const auto windows = make_windows(normalized, model.config.encoder.lookback,
                                      model.config.encoder.horizon, cfg.get_int("data.stride"));
    auto [train, val, test] = split_chronological(windows, split_from(cfg));
    if (test.empty()) throw ConfigError("evaluate: test split is empty");

    const MetricReport report =
        evaluate(model, test, sampler_config_from(cfg), {},
                 cfg.get_bool("data.metrics_on_normalized"), fs::path(csv).stem().string());

    const fs::path dir = make_run_dir(cfg, "evaluate");
    write_json(dir / "report.json", report.to_json());
    char line[160];
    std::snprintf(line, sizeof(line), "dataset=%s  mse=%.6f  mae=%.6f  windows=%zu\n",
                  report.dataset.c_str(), report.mse_avg, report.mae_avg, test.size());
    write_text(dir / "report.txt", line);
    write_json(dir / "resolved_config.json", cfg.values());
    write_manifest(dir, "evaluate", cfg, {"report.json", "report.txt", "resolved_config.json"});
    std::cout << line;
    return 0;
}

int cmd_transfer(const FlatConfig& cfg) {
    const std::string target_csv = cfg.get_string("transfer.target_csv");
    if (target_csv.empty()) throw ConfigError("transfer: missing transfer.target_csv");
    const auto ratios = cfg.get_double_list("transfer.ratios");
    if (ratios.empty()) throw ConfigError("transfer: empty ratio list");

    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    TrainConfig tc = train_config_from(cfg);

    // Source model: an existing checkpoint, or trained now from a source CSV.
    ForecastModel source = [&]() -> ForecastModel {
        const std::string ckpt = cfg.get_string("transfer.source_checkpoint");
        if (!ckpt.empty()) {
            if (!fs::exists(ckpt)) throw ConfigError("transfer: checkpoint not found: " + ckpt);
            return load_checkpoint(ckpt);
        }
        const std::string src_csv = cfg.get_string("transfer.source_csv");
        if (src_csv.empty())
            throw ConfigError("transfer: need transfer.source_checkpoint or transfer.source_csv");
        PreparedData src = prepare_data(src_csv, cfg, cfg.get_int("data.lookback"),
                                        cfg.get_int("data.horizon"));
        ForecastModel model(model_config_from(cfg, src.raw.channels()), seed);
        model.stats = src.stats;
        train_joint(model, src.train, src.val, tc);
        return model;
    }();

    PreparedData target = prepare_data(target_csv, cfg, source.config.encoder.lookback,
                                       source.config.encoder.horizon);
    source.stats = target.stats;

    const auto rows = run_transfer(source, target.train, target.val, target.test, ratios, tc,
                                   sampler_config_from(cfg),
                                   cfg.get_bool("data.metrics_on_normalized"),
                                   fs::path(target_csv).stem().string());

    const fs::path dir = make_run_dir(cfg, "transfer");
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"ratio", r.ratio}, {"report", r.report.to_json()}});
    write_json(dir / "transfer.json", rows_json);
    write_text(dir / "transfer.txt", format_transfer_table(rows));
    write_json(dir / "resolved_config.json", cfg.values());
    write_manifest(dir, "transfer", cfg, {"transfer.json", "transfer.txt", "resolved_config.json"});
    std::cout << format_transfer_table(rows);
    return 0;
}

int cmd_ablate(const FlatConfig& cfg) {
    AblationPlan plan;
    plan.variants = cfg.get_string_list("ablation.variants");
    plan.layer_sweep = cfg.get_int_list("ablation.layer_sweep");
    plan.validate();

    PreparedData data = prepare_data(cfg.get_string("data.csv"), cfg,
                                     cfg.get_int("data.lookback"), cfg.get_int("data.horizon"));
    const ModelConfig base = model_config_from(cfg, data.raw.channels());
    const auto rows = run_ablation(plan, base, train_config_from(cfg), sampler_config_from(cfg),
                                   data.train, data.val, data.test,
                                   cfg.get_bool("data.metrics_on_normalized"),
                                   fs::path(cfg.get_string("data.csv")).stem().string());

    const fs::path dir = make_run_dir(cfg, "ablate");
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"label", r.label},
                             {"status", r.status},
                             {"window_hash", r.window_hash},
                             {"report", r.status == "ok" ? r.report.to_json() : nlohmann::json()}});
    write_json(dir / "ablation.json", rows_json);
    write_text(dir / "ablation.txt", format_ablation_table(rows));
    write_json(dir / "resolved_config.json", cfg.values());
    write_manifest(dir, "ablate", cfg, {"ablation.json", "ablation.txt", "resolved_config.json"});
    std::cout << format_ablation_table(rows);
    return 0;
}

constexpr const char* kUsage =
    "usage: ltsmdiff <command> [options]\n"
    "\n"
    "commands:\n"
    "  train      fit a model on data.csv and write a checkpoint\n"
    "  forecast   sample forecasts from a checkpoint (--checkpoint, --input)\n"
    "  evaluate   compute MSE/MAE on the test split (--checkpoint)\n"
    "  transfer   few-shot transfer grid onto a target dataset\n"
    "  ablate     run the ablation plan (variants + layer sweep)\n"
    "\n"
    "options:\n"
    "  --config FILE      flat JSON config (dotted keys)\n"
    "  --<section.key> V  override any config key, e.g. --train.lambda 0.5\n"
    "  --seed N           shorthand for --run.seed (env LTSMDIFF_SEED as fallback)\n"
    "  --jobs N           cap worker threads (1 = fully serial)\n"
    "  --checkpoint FILE  checkpoint path for forecast/evaluate\n"
    "  --input FILE       input CSV for forecast\n"
    "  --trace            also write the denoising trace (forecast)\n"
    "  --out DIR          shorthand for --run.output_dir\n";

int dispatch(const std::string& command, const FlatConfig& cfg) {
    if (command == "train") return cmd_train(cfg);
    if (command == "forecast") return cmd_forecast(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "transfer") return cmd_transfer(cfg);
    if (command == "ablate") return cmd_ablate(cfg);
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

int run(int argc, const char* const* argv) {
    try {
        if (argc < 2) {
            std::cerr << kUsage;
            return 2;
        }
        const std::string command = argv[1];
        if (command == "--help" || command == "-h" || command == "help") {
            std::cout << kUsage;
            return 0;
        }

        FlatConfig cfg;
        bool seed_given = false;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
            arg = arg.substr(2);
            auto need_value = [&](const char* what) -> std::string {
                if (i + 1 >= argc) throw ConfigError(std::string("missing value for --") + what);
                return argv[++i];
            };
            if (arg == "config") {
                cfg.apply_file(need_value("config"));
            } else if (arg == "seed") {
                overrides.emplace_back("run.seed", need_value("seed"));
                seed_given = true;
            } else if (arg == "jobs") {
                overrides.emplace_back("run.jobs", need_value("jobs"));
            } else if (arg == "checkpoint") {
                const std::string v = need_value("checkpoint");
                overrides.emplace_back("forecast.checkpoint", v);
                overrides.emplace_back("evaluate.checkpoint", v);
            } else if (arg == "input") {
                overrides.emplace_back("forecast.input_csv", need_value("input"));
            } else if (arg == "trace") {
                overrides.emplace_back("forecast.trace", "true");
            } else if (arg == "out") {
                overrides.emplace_back("run.output_dir", need_value("out"));
            } else {
                overrides.emplace_back(arg, need_value(arg.c_str()));
            }
        }
        for (const auto& [k, v] : overrides) {
            cfg.apply_override(k, v);
            if (k == "run.seed") seed_given = true;
        }
        if (!seed_given) {
            if (const char* env = std::getenv("LTSMDIFF_SEED")) cfg.apply_override("run.seed", env);
        }

        const int jobs = cfg.get_int("run.jobs");
        if (jobs > 0) kernels::set_threads(jobs);
        if (jobs == 1) kernels::set_mode(kernels::ExecMode::kSerial);

        return dispatch(command, cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ltsm::cli
