#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nvmag/sensor.hpp"

namespace nvmag {

enum class Dim { none, frequency, field, time, volume, level, count };

/// Parses "<number>[, <number>...] [unit]" and converts to SI (Hz, T, s,
/// m^3, dBc/Hz). Angular rates are not accepted; frequencies are in Hz.
std::vector<double> parse_quantity(const std::string& text, Dim dim);

/// INI file with dotted section names ("[sensor.spins]"). Every key that is
/// read is marked; check_unused() rejects typos.
class IniFile {
public:
    static IniFile load(const std::string& path);
    static IniFile parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> text(const std::string& section, const std::string& key) const;
    double number(const std::string& section, const std::string& key, Dim dim, double fallback) const;
    std::vector<double> list(const std::string& section, const std::string& key, Dim dim,
                             std::vector<double> fallback) const;
    std::string string(const std::string& section, const std::string& key, const std::string& fallback) const;
    void check_unused() const;

    const std::string& origin() const { return origin_; }
    const std::string& sha256() const { return sha256_; }

private:
    std::map<std::string, std::map<std::string, std::string>> data_;
    mutable std::map<std::string, bool> used_;
    std::string origin_;
    std::string sha256_;
};

std::string sha256_hex(const std::string& bytes);

struct NoiseSettings {
    std::string file;                 // CSV spectrum; overrides level when set
    double level_dbc = 0.0;           // dBc/Hz, flat over [f_lo, f_hi]
    double f_lo = 0.0;
    double f_hi = 0.0;                // 0 disables the flat spectrum
    NoiseKind kind = NoiseKind::amplitude;
    NoisePlacement placement = NoisePlacement::reflected;

    bool enabled() const { return !file.empty() || f_hi > 0.0; }
};

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    int threads = 1;
    std::string config_hash;
    std::string source;

    double sample_rate = 2e6;
    ReferenceParams sensor;

    double duration = 10.0;
    std::size_t warmup_frames = 10;
    std::size_t template_frames = 16;

    Vec3 test_amplitude_rms = Vec3::Constant(1e-6);
    Vec3 test_freqs{15.0, 25.0, 35.0};

    NoiseSettings mw_noise;
    NoiseSettings bias_amp_noise;
    NoiseSettings bias_phase_noise;

    double sweep_level_dbc = -110.0;
    std::vector<double> sweep_bandwidths{0.0, 4e3, 40e3, 100e3, 200e3, 400e3, 800e3, 1e6};
    double sweep_duration = 4.0;

    double segment_seconds = 1.0;
    double band_lo = 10.0;
    double band_hi = 900.0;
    int harmonics = 20;

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_ini(const IniFile& ini);

}  // namespace nvmag
