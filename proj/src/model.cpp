#include "ltsmdiff/model.hpp"

namespace ltsm {

void ModelConfig::finalize() {
    uvit.cond_tokens = encoder.lookback;
    uvit.cond_dim = encoder.width;
    uvit.target_tokens = encoder.horizon;
    uvit.target_dim = encoder.channels;
}

void ModelConfig::validate() const {
    encoder.validate();
    if (with_denoiser) uvit.validate();
    if (schedule_steps < 1) throw ConfigError("model: schedule_steps must be >= 1");
    if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
        throw ConfigError("model: need 0 < beta_start <= beta_end < 1");
}

void to_json(nlohmann::json& j, const LoRAConfig& c) {
    j = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout_p}};
}
void from_json(const nlohmann::json& j, LoRAConfig& c) {
    c.rank = j.value("rank", c.rank);
    c.alpha = j.value("alpha", c.alpha);
    c.dropout_p = j.value("dropout", c.dropout_p);
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"channels", c.channels},   {"width", c.width},
         {"n_heads", c.n_heads},     {"dropout", c.dropout_p},
         {"n_blocks", c.n_blocks},   {"lora", c.lora},
         {"max_context", c.max_context}, {"lookback", c.lookback},
         {"horizon", c.horizon}};
}
void from_json(const nlohmann::json& j, EncoderConfig& c) {
    c.channels = j.value("channels", c.channels);
    c.width = j.value("width", c.width);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.dropout_p = j.value("dropout", c.dropout_p);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    if (j.contains("lora")) c.lora = j["lora"].get<LoRAConfig>();
    c.max_context = j.value("max_context", c.max_context);
    c.lookback = j.value("lookback", c.lookback);
    c.horizon = j.value("horizon", c.horizon);
}

void to_json(nlohmann::json& j, const UViTConfig& c) {
    j = {{"depth", c.depth},
         {"width", c.width},
         {"n_heads", c.n_heads},
         {"time_embed_dim", c.time_embed_dim},
         {"cond_tokens", c.cond_tokens},
         {"cond_dim", c.cond_dim},
         {"target_tokens", c.target_tokens},
         {"target_dim", c.target_dim},
         {"dropout", c.dropout_p}};
}
void from_json(const nlohmann::json& j, UViTConfig& c) {
    c.depth = j.value("depth", c.depth);
    c.width = j.value("width", c.width);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.cond_tokens = j.value("cond_tokens", c.cond_tokens);
    c.cond_dim = j.value("cond_dim", c.cond_dim);
    c.target_tokens = j.value("target_tokens", c.target_tokens);
    c.target_dim = j.value("target_dim", c.target_dim);
    c.dropout_p = j.value("dropout", c.dropout_p);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"encoder", c.encoder},
         {"uvit", c.uvit},
         {"with_denoiser", c.with_denoiser},
         {"schedule_steps", c.schedule_steps},
         {"beta_start", c.beta_start},
         {"beta_end", c.beta_end}};
}
void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (j.contains("encoder")) c.encoder = j["encoder"].get<EncoderConfig>();
    if (j.contains("uvit")) c.uvit = j["uvit"].get<UViTConfig>();
    c.with_denoiser = j.value("with_denoiser", c.with_denoiser);
    c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
}

namespace {
ModelConfig finalized(ModelConfig c) {
    c.finalize();
    c.validate();
    return c;
}
}  // namespace

ForecastModel::ForecastModel(ModelConfig cfg, std::uint64_t seed)
    : config(finalized(std::move(cfg))),
      encoder(config.encoder, Rng::derive(seed, 1).next_u64()) {
    if (config.with_denoiser)
        denoiser.emplace(config.uvit, Rng::derive(seed, 2).next_u64());
    schedule = NoiseSchedule::linear(config.schedule_steps, config.beta_start, config.beta_end);
}

std::vector<Parameter*> ForecastModel::all_params() {
    std::vector<Parameter*> out;
    encoder.collect_params(out);
    if (denoiser) denoiser->collect_params(out);
    return out;
}

std::vector<Parameter*> ForecastModel::trainable_params() {
    std::vector<Parameter*> out;
    for (auto* p : all_params())
        if (p->trainable) out.push_back(p);
    return out;
}

std::int64_t ForecastModel::trainable_count() {
    std::int64_t n = 0;
    for (auto* p : trainable_params()) n += static_cast<std::int64_t>(p->value.size());
    return n;
}

ForecastResult ForecastModel::forecast(const Mat& x_normalized, const SamplerConfig& sampler,
                                       bool denormalize_outputs) {
    if (!denoiser) throw ConfigError("model: forecast requires a denoiser");
    const NormStats* stats_ptr =
        (denormalize_outputs && stats.channels() > 0) ? &stats : nullptr;
    return forecast_with_uncertainty(encoder, *denoiser, schedule, x_normalized, sampler,
                                     stats_ptr);
}

void save_checkpoint(const std::string& path, ForecastModel& model, const nlohmann::json& extra) {
    TensorArchive archive;
    auto trainable_tags = nlohmann::json::object();
    for (auto* p : model.all_params()) {
        archive.add(p->name, p->value);
        trainable_tags[p->name] = p->trainable;
    }
    Mat beta(1, model.schedule.steps);
    for (int t = 0; t < model.schedule.steps; ++t) beta(0, t) = model.schedule.beta[t];
    archive.add("schedule.beta", beta);
    if (model.stats.channels() > 0) {
        Mat mean(1, model.stats.channels()), stddev(1, model.stats.channels());
        for (int c = 0; c < model.stats.channels(); ++c) {
            mean(0, c) = model.stats.mean[c];
            stddev(0, c) = model.stats.stddev[c];
        }
        archive.add("norm.mean", mean);
        archive.add("norm.std", stddev);
    }
    archive.metadata()["model_config"] = model.config;
    archive.metadata()["trainable"] = trainable_tags;
    archive.metadata()["extra"] = extra;
    archive.save(path);
}

ForecastModel load_checkpoint(const std::string& path) {
    TensorArchive archive = TensorArchive::load(path);
    const auto cfg = archive.metadata().at("model_config").get<ModelConfig>();
    ForecastModel model(cfg, /*seed=*/0);

    const auto& tags = archive.metadata().at("trainable");
    for (auto* p : model.all_params()) {
        if (!archive.has(p->name))
            throw DataError("checkpoint missing tensor '" + p->name + "'");
        const Mat& t = archive.get(p->name);
        if (!t.same_shape(p->value))
            throw DataError("checkpoint tensor '" + p->name + "' has shape " + t.shape_str() +
                            ", expected " + p->value.shape_str());
        if (tags.contains(p->name) && tags[p->name].get<bool>() != p->trainable)
            throw DataError("checkpoint tensor '" + p->name + "' has inconsistent trainable tag");
        p->value = t;
    }

    const Mat& beta = archive.get("schedule.beta");
    if (beta.cols() != model.schedule.steps) throw DataError("checkpoint schedule length mismatch");
    for (int t = 0; t < beta.cols(); ++t) {
        model.schedule.beta[t] = beta(0, t);
        model.schedule.alpha[t] = 1.0 - beta(0, t);
        model.schedule.alpha_bar[t + 1] = model.schedule.alpha_bar[t] * model.schedule.alpha[t];
    }

    if (archive.has("norm.mean")) {
        const Mat& mean = archive.get("norm.mean");
        const Mat& stddev = archive.get("norm.std");
        model.stats.mean.assign(mean.data(), mean.data() + mean.size());
        model.stats.stddev.assign(stddev.data(), stddev.data() + stddev.size());
    }
    return model;
}

nlohmann::json checkpoint_metadata(const std::string& path) {
    return TensorArchive::load(path).metadata();
}

}  // namespace ltsm
