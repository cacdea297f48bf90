#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ltsmdiff/diffusion_core.hpp"
#include "ltsmdiff/ltsm_encoder.hpp"
#include "ltsmdiff/timeseries_data.hpp"
#include "ltsmdiff/uvit_denoiser.hpp"

namespace ltsm {

/// Noise estimate for a target state at reverse step t, with the condition
/// already bound. Stub predictors slot in here for sampler algebra tests.
using NoisePredictor = std::function<Mat(const Mat& y_noisy, int t)>;

struct SamplerConfig {
    enum class Kind { kDdpm, kDdim };
    Kind kind = Kind::kDdpm;
    int steps = 0;  // DDIM reverse steps; 0 → schedule.steps. Ignored by DDPM.
    double eta = 0.0;
    int ensemble_size = 20;
    std::uint64_t seed = 0;
    int trace_every = 1;

    void validate(int schedule_steps) const;
    static Kind parse_kind(const std::string& s);
};

/// Reverse-process intermediates of one ensemble member plus the ensemble
/// band statistics. The last intermediate equals that member's final sample.
struct DenoiseTrace {
    std::vector<int> steps;          // timestep label after each retained update
    std::vector<Mat> intermediates;  // H×d, in data units when stats given
    Mat initial_ltsm_forecast;       // encoder head output (H×d)
    Mat band_low, band_high;         // pointwise 5%/95% ensemble quantiles
};

/// Ancestral DDPM sampling from pure noise; returns y_0 (rows×cols).
Mat ddpm_sample(const NoisePredictor& predict, int rows, int cols, const NoiseSchedule& schedule,
                Rng& rng, DenoiseTrace* trace = nullptr, int trace_every = 1);

/// DDIM sampling over a uniform-stride subgrid of `steps` timesteps;
/// eta = 0 is deterministic given the initial noise draw.
Mat ddim_sample(const NoisePredictor& predict, int rows, int cols, const NoiseSchedule& schedule,
                int steps, double eta, Rng& rng, DenoiseTrace* trace = nullptr,
                int trace_every = 1);

struct ForecastResult {
    Mat mean;  // ensemble mean, H×d
    DenoiseTrace trace;
};

/// Conditional forecast with uncertainty: encodes X (condition kept clean,
/// t_x = 0 at every reverse step), draws an ensemble, and returns the
/// elementwise mean plus 5–95% bands and member-0 intermediates. When
/// `denorm_stats` is given all outputs are converted back to data units.
ForecastResult forecast_with_uncertainty(Encoder& encoder, UViTDenoiser& denoiser,
                                         const NoiseSchedule& schedule, const Mat& x_normalized,
                                         const SamplerConfig& config,
                                         const NormStats* denorm_stats = nullptr);

}  // namespace ltsm
