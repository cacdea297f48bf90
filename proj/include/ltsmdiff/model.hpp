#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltsmdiff/diffusion_core.hpp"
#include "ltsmdiff/ltsm_encoder.hpp"
#include "ltsmdiff/sampling.hpp"
#include "ltsmdiff/timeseries_data.hpp"
#include "ltsmdiff/uvit_denoiser.hpp"

namespace ltsm {

struct ModelConfig {
    EncoderConfig encoder;
    UViTConfig uvit;
    bool with_denoiser = true;  // false → encoder-only variant, no UViT built
    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    /// Derives the UViT token layout from the encoder shape.
    void finalize();
    void validate() const;
};

void to_json(nlohmann::json& j, const LoRAConfig& c);
void from_json(const nlohmann::json& j, LoRAConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const UViTConfig& c);
void from_json(const nlohmann::json& j, UViTConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Encoder + (optional) denoiser + schedule + normalization stats: everything
/// a checkpoint persists.
class ForecastModel {
public:
    ForecastModel(ModelConfig cfg, std::uint64_t seed);

    ModelConfig config;
    Encoder encoder;
    std::optional<UViTDenoiser> denoiser;
    NoiseSchedule schedule;
    NormStats stats;  // empty until data prep fills it

    std::vector<Parameter*> all_params();
    std::vector<Parameter*> trainable_params();
    std::int64_t trainable_count();

    ForecastResult forecast(const Mat& x_normalized, const SamplerConfig& sampler,
                            bool denormalize_outputs = true);
};

/// Checkpoint archive: every model tensor (frozen + trainable, tags recorded
/// in metadata), the schedule, normalization stats, and caller metadata.
/// load_checkpoint reconstructs a model whose forward outputs are bitwise
/// identical to the saved one.
void save_checkpoint(const std::string& path, ForecastModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());
ForecastModel load_checkpoint(const std::string& path);
nlohmann::json checkpoint_metadata(const std::string& path);

}  // namespace ltsm
