#pragma once

#include <cstddef>
#include <vector>

#include "nvmag/pipeline.hpp"
#include "nvmag/sensor.hpp"

namespace nvmag {

/// Signed beta and hyperfine spacing of orientations 1..3 from the sensor
/// physics (drive frequency, bias amplitude, axes).
PipelineConfig pipeline_config_for(const SensorModel& model, const BiasWaveform& bias);

/// b0_vec . n_i for orientations 1..3 (T, peak, signed).
Vec3 bias_projections(const SensorModel& model, const BiasWaveform& bias);

struct ChainOptions {
    std::size_t warmup_frames = 10;    // discarded after every (re)start
    std::size_t template_frames = 16;  // clean frames for templates and baseline
    std::size_t chunk_frames = 256;    // frames synthesized per block
};

/// Synthesize -> frame -> linearize -> match -> combine, streamed in blocks
/// so long records never hold the whole trace.
class MagnetometerChain {
public:
    MagnetometerChain(SensorModel model, BiasWaveform bias, ChainOptions opt = {});

    /// Runs the noise-free sensor to build templates and the tau baseline.
    void prepare();
    bool ready() const { return pipeline_.ready(); }

    /// Baseline-subtracted tau, one per frame after the warm-up; times are
    /// absolute simulation times of the frame midpoints.
    std::vector<TauVector> run(const FieldFn& external, const MwNoise* noise, double duration);

    const Pipeline& pipeline() const { return pipeline_; }
    const SensorModel& model() const { return model_; }
    const BiasWaveform& bias() const { return bias_; }
    double frame_rate() const { return bias_.omega_m / kTwoPi; }

private:
    SensorModel model_;
    BiasWaveform bias_;
    ChainOptions opt_;
    Pipeline pipeline_;
};

}  // namespace nvmag
