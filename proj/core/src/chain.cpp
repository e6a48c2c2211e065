#include "nvmag/chain.hpp"

#include <cmath>

#include "nvmag/error.hpp"

namespace nvmag {

Vec3 bias_projections(const SensorModel& model, const BiasWaveform& bias) {
    Vec3 p;
    for (int i = 0; i < 3; ++i) p[i] = bias.b0_vec.dot(model.basis.axis(i));
    return p;
}

PipelineConfig pipeline_config_for(const SensorModel& model, const BiasWaveform& bias) {
    const auto& pc = model.constants;
    const double dc = model.params.cavity.omega_d - pc.d_zfs;
    const Vec3 proj = bias_projections(model, bias);
    PipelineConfig cfg;
    cfg.omega_m = bias.omega_m;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(proj[i]) < 1e-15) throw Error("pipeline_config_for: bias has no projection on an orientation");
        cfg.beta[static_cast<std::size_t>(i)] = dc / (pc.gamma_e * proj[i]);
        cfg.hf_spacing[static_cast<std::size_t>(i)] = pc.a_hf / (pc.gamma_e * std::abs(proj[i]));
        if (std::abs(cfg.beta[static_cast<std::size_t>(i)]) >= 1.0) {
            throw Error("pipeline_config_for: orientation " + std::to_string(i + 1) + " never crosses the drive frequency");
        }
    }
    cfg.validate();
    return cfg;
}

MagnetometerChain::MagnetometerChain(SensorModel model, BiasWaveform bias, ChainOptions opt)
    : model_(std::move(model)),
      bias_(std::move(bias)),
      opt_(opt),
      pipeline_(pipeline_config_for(model_, bias_), model_.sim.sample_rate) {
    if (opt_.template_frames < pipeline_.config().min_template_frames) {
        throw Error("MagnetometerChain: too few template frames");
    }
    if (opt_.chunk_frames == 0) throw Error("MagnetometerChain: chunk_frames must be positive");
}

void MagnetometerChain::prepare() {
    BiasWaveform clean = bias_;
    clean.amp_noise.clear();
    clean.phase_noise.clear();
    SensorStream stream(model_, clean, FieldFn{}, nullptr);
    const double fs = model_.sim.sample_rate;
    const std::size_t len = frame_length(fs, bias_.omega_m);
    std::vector<cplx> skip(len * opt_.warmup_frames);
    stream.next(skip);
    std::vector<Frame> frames(opt_.template_frames);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        frames[k].index = opt_.warmup_frames + k;
        frames[k].start_time = static_cast<double>(frames[k].index * len) / fs;
        frames[k].samples.resize(len);
        stream.next(frames[k].samples);
    }
    pipeline_.calibrate(frames);
}

std::vector<TauVector> MagnetometerChain::run(const FieldFn& external, const MwNoise* noise, double duration) {
    if (!pipeline_.ready()) throw Error("MagnetometerChain: prepare() has not been called");
    if (!(duration > 0.0)) throw Error("MagnetometerChain: duration must be positive");
    const double fs = model_.sim.sample_rate;
    const std::size_t len = frame_length(fs, bias_.omega_m);
    const auto nframes = static_cast<std::size_t>(std::floor(duration * frame_rate() + 1e-9));
    if (nframes == 0) throw Error("MagnetometerChain: duration shorter than one bias period");

    SensorStream stream(model_, bias_, external, noise);
    std::vector<cplx> skip(len * opt_.warmup_frames);
    stream.next(skip);
    pipeline_.reset_tracking();

    std::vector<TauVector> out;
    out.reserve(nframes);
    std::vector<cplx> block;
    Frame f;
    f.samples.resize(len);
    for (std::size_t done = 0; done < nframes;) {
        const std::size_t n = std::min(opt_.chunk_frames, nframes - done);
        block.resize(n * len);
        stream.next(block);
        for (std::size_t k = 0; k < n; ++k) {
            std::copy_n(block.begin() + static_cast<std::ptrdiff_t>(k * len), len, f.samples.begin());
            f.index = opt_.warmup_frames + done + k;
            f.start_time = static_cast<double>(f.index * len) / fs;
            out.push_back(pipeline_.process(f));
        }
        done += n;
    }
    return out;
}

}  // namespace nvmag
