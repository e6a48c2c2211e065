#include "nvmag/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

struct Unit {
    const char* name;
    Dim dim;
    double scale;
};

constexpr Unit kUnits[] = {
    {"Hz", Dim::frequency, 1.0},   {"kHz", Dim::frequency, 1e3}, {"MHz", Dim::frequency, 1e6},
    {"GHz", Dim::frequency, 1e9},  {"T", Dim::field, 1.0},       {"mT", Dim::field, 1e-3},
    {"uT", Dim::field, 1e-6},      {"nT", Dim::field, 1e-9},     {"pT", Dim::field, 1e-12},
    {"G", Dim::field, 1e-4},       {"s", Dim::time, 1.0},        {"ms", Dim::time, 1e-3},
    {"us", Dim::time, 1e-6},       {"m3", Dim::volume, 1.0},     {"cm3", Dim::volume, 1e-6},
    {"mm3", Dim::volume, 1e-9},    {"dBc/Hz", Dim::level, 1.0},
};

const char* dim_name(Dim d) {
    switch (d) {
        case Dim::none: return "dimensionless";
        case Dim::frequency: return "frequency (Hz)";
        case Dim::field: return "magnetic field (T)";
        case Dim::time: return "time (s)";
        case Dim::volume: return "volume (m3)";
        case Dim::level: return "level (dBc/Hz)";
        case Dim::count: return "count";
    }
    return "?";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> parse_quantity(const std::string& text, Dim dim) {
    std::string body = trim(text);
    std::string unit;
    const auto sp = body.find_last_of(" \t");
    if (sp != std::string::npos) {
        const std::string last = body.substr(sp + 1);
        if (!last.empty() && (std::isalpha(static_cast<unsigned char>(last[0])) != 0)) {
            unit = last;
            body = trim(body.substr(0, sp));
        }
    } else if (!body.empty() && std::isalpha(static_cast<unsigned char>(body.back())) != 0) {
        throw Error("quantity '" + text + "': separate the unit from the number with a space");
    }
    double scale = 1.0;
    if (dim == Dim::none || dim == Dim::count) {
        if (!unit.empty()) throw Error("quantity '" + text + "': expected a plain number, got unit " + unit);
    } else {
        if (unit.empty()) throw Error("quantity '" + text + "': missing unit, expected " + dim_name(dim));
        const auto it = std::find_if(std::begin(kUnits), std::end(kUnits), [&](const Unit& u) { return unit == u.name; });
        if (it == std::end(kUnits)) throw Error("quantity '" + text + "': unknown unit " + unit);
        if (it->dim != dim) {
            throw Error("quantity '" + text + "': unit " + unit + " is not a " + dim_name(dim));
        }
        scale = it->scale;
    }
    std::vector<double> out;
    std::string item;
    std::istringstream is(body);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) throw Error("quantity '" + text + "': empty list element");
        std::size_t used = 0;
        double v;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw Error("quantity '" + text + "': not a number: " + item);
        }
        if (used != item.size() || !std::isfinite(v)) throw Error("quantity '" + text + "': not a number: " + item);
        if (dim == Dim::count && (v < 0.0 || v != std::floor(v))) {
            throw Error("quantity '" + text + "': expected a non-negative integer");
        }
        out.push_back(v * scale);
    }
    if (out.empty()) throw Error("quantity '" + text + "': no value");
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest failed");
    }
    std::ostringstream os;
    os << std::hex;
    for (unsigned int i = 0; i < len; ++i) os << (md[i] >> 4) << (md[i] & 0xf);
    return os.str();
}

IniFile IniFile::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

IniFile IniFile::parse(const std::string& text, const std::string& origin) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error("config: " + origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    IniFile f;
    f.origin_ = origin;
    f.sha256_ = sha256_hex(text);
    for (const auto& [section, node] : tree) {
        if (node.empty()) throw Error("config: " + origin + ": key '" + section + "' outside any section");
        for (const auto& [key, value] : node) {
            f.data_[section][key] = value.data();
            f.used_[section + "/" + key] = false;
        }
    }
    return f;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) != 0;
}

std::optional<std::string> IniFile::text(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    if (s == data_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    used_[section + "/" + key] = true;
    return k->second;
}

double IniFile::number(const std::string& section, const std::string& key, Dim dim, double fallback) const {
    const auto t = text(section, key);
    if (!t) return fallback;
    try {
        const auto v = parse_quantity(*t, dim);
        if (v.size() != 1) throw Error("expected a single value");
        return v[0];
    } catch (const Error& e) {
        throw Error("config: " + origin_ + ": [" + section + "] " + key + ": " + e.what());
    }
}

std::vector<double> IniFile::list(const std::string& section, const std::string& key, Dim dim,
                                  std::vector<double> fallback) const {
    const auto t = text(section, key);
    if (!t) return fallback;
    try {
        return parse_quantity(*t, dim);
    } catch (const Error& e) {
        throw Error("config: " + origin_ + ": [" + section + "] " + key + ": " + e.what());
    }
}

std::string IniFile::string(const std::string& section, const std::string& key, const std::string& fallback) const {
    const auto t = text(section, key);
    return t ? trim(*t) : fallback;
}

void IniFile::check_unused() const {
    for (const auto& [k, used] : used_) {
        if (!used) {
            const auto slash = k.find('/');
            throw Error("config: " + origin_ + ": unknown key '" + k.substr(slash + 1) + "' in [" + k.substr(0, slash) + "]");
        }
    }
}

}  // namespace nvmag

namespace nvmag {

namespace {

NoiseSettings read_noise(const IniFile& ini, const std::string& section, NoisePlacement default_placement,
                         NoiseKind default_kind) {
    NoiseSettings n;
    n.placement = default_placement;
    n.file = ini.string(section, "file", "");
    n.level_dbc = ini.number(section, "level", Dim::level, 0.0);
    const auto band = ini.list(section, "band", Dim::frequency, {0.0, 0.0});
    if (band.size() != 2) throw Error("config: [" + section + "] band needs two frequencies");
    n.f_lo = band[0];
    n.f_hi = band[1];
    const std::string kind = ini.string(section, "kind", default_kind == NoiseKind::phase ? "phase" : "amplitude");
    if (kind == "amplitude") {
        n.kind = NoiseKind::amplitude;
    } else if (kind == "phase") {
        n.kind = NoiseKind::phase;
    } else {
        throw Error("config: [" + section + "] kind must be amplitude or phase");
    }
    const std::string place = ini.string(section, "placement", default_placement == NoisePlacement::drive ? "drive" : "reflected");
    if (place == "drive") {
        n.placement = NoisePlacement::drive;
    } else if (place == "reflected") {
        n.placement = NoisePlacement::reflected;
    } else {
        throw Error("config: [" + section + "] placement must be drive or reflected");
    }
    return n;
}

}  // namespace

ExperimentConfig config_from_ini(const IniFile& ini) {
    ExperimentConfig c;
    c.source = ini.origin();
    c.config_hash = ini.sha256();
    c.name = ini.string("experiment", "name", "");
    c.seed = static_cast<std::uint64_t>(ini.number("experiment", "seed", Dim::count, 1.0));
    c.output_dir = ini.string("experiment", "output", c.output_dir);
    c.threads = static_cast<int>(ini.number("experiment", "threads", Dim::count, 1.0));

    auto& s = c.sensor;
    c.sample_rate = ini.number("sensor", "sample_rate", Dim::frequency, c.sample_rate);
    s.bias_rms = ini.number("sensor", "bias_rms", Dim::field, s.bias_rms);
    s.bias_freq = ini.number("sensor", "bias_freq", Dim::frequency, s.bias_freq);
    s.offset_field = ini.number("sensor", "offset_field", Dim::field, s.offset_field);
    s.substeps = static_cast<int>(ini.number("sensor", "substeps", Dim::count, s.substeps));
    s.adiabatic_detuning = ini.number("sensor", "adiabatic_detuning", Dim::none, s.adiabatic_detuning);
    s.kappa_c0 = kTwoPi * ini.number("sensor.cavity", "kappa_c0", Dim::frequency, s.kappa_c0 / kTwoPi);
    s.kappa_c1 = kTwoPi * ini.number("sensor.cavity", "kappa_c1", Dim::frequency, s.kappa_c1 / kTwoPi);
    s.v_cav = ini.number("sensor.cavity", "volume", Dim::volume, s.v_cav);
    s.n_spins = ini.number("sensor.spins", "n_spins", Dim::none, s.n_spins);
    s.kappa_s = kTwoPi * ini.number("sensor.spins", "kappa_s", Dim::frequency, s.kappa_s / kTwoPi);
    s.kappa_op = kTwoPi * ini.number("sensor.spins", "kappa_op", Dim::frequency, s.kappa_op / kTwoPi);
    s.n_cav = ini.number("sensor.spins", "n_cav", Dim::none, s.n_cav);

    c.duration = ini.number("run", "duration", Dim::time, c.duration);
    c.warmup_frames = static_cast<std::size_t>(ini.number("run", "warmup_frames", Dim::count, 10.0));
    c.template_frames = static_cast<std::size_t>(ini.number("run", "template_frames", Dim::count, 16.0));

    const auto amp = ini.list("test_field", "amplitude_rms", Dim::field, {c.test_amplitude_rms[0], c.test_amplitude_rms[1], c.test_amplitude_rms[2]});
    const auto fr = ini.list("test_field", "frequency", Dim::frequency, {c.test_freqs[0], c.test_freqs[1], c.test_freqs[2]});
    if (amp.size() != 3 || fr.size() != 3) throw Error("config: [test_field] needs three amplitudes and three frequencies");
    c.test_amplitude_rms = Vec3(amp[0], amp[1], amp[2]);
    c.test_freqs = Vec3(fr[0], fr[1], fr[2]);

    c.mw_noise = read_noise(ini, "noise.mw", NoisePlacement::reflected, NoiseKind::amplitude);
    c.bias_amp_noise = read_noise(ini, "noise.bias_amplitude", NoisePlacement::drive, NoiseKind::amplitude);
    c.bias_phase_noise = read_noise(ini, "noise.bias_phase", NoisePlacement::drive, NoiseKind::phase);

    c.sweep_level_dbc = ini.number("sweep", "level", Dim::level, c.sweep_level_dbc);
    c.sweep_bandwidths = ini.list("sweep", "bandwidths", Dim::frequency, c.sweep_bandwidths);
    c.sweep_duration = ini.number("sweep", "duration", Dim::time, c.sweep_duration);

    c.segment_seconds = ini.number("analysis", "segment", Dim::time, c.segment_seconds);
    const auto band = ini.list("analysis", "band", Dim::frequency, {c.band_lo, c.band_hi});
    if (band.size() != 2) throw Error("config: [analysis] band needs two frequencies");
    c.band_lo = band[0];
    c.band_hi = band[1];
    c.harmonics = static_cast<int>(ini.number("analysis", "harmonics", Dim::count, c.harmonics));

    ini.check_unused();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) { return config_from_ini(IniFile::load(path)); }

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error("config: " + m); };
    if (name.empty()) fail("[experiment] name is required");
    if (threads < 1) fail("[experiment] threads must be at least 1");
    if (!(sample_rate > 0.0)) fail("[sensor] sample_rate must be positive");
    if (!(sensor.bias_rms > 0.0) || !(sensor.bias_freq > 0.0)) fail("[sensor] bias must be positive");
    if (!(sensor.v_cav > 0.0)) fail("[sensor.cavity] volume must be positive");
    if (!(sensor.kappa_c0 > 0.0) || !(sensor.kappa_c1 > 0.0)) fail("[sensor.cavity] rates must be positive");
    if (!(sensor.kappa_s > 0.0) || !(sensor.kappa_op > 0.0)) fail("[sensor.spins] rates must be positive");
    if (sensor.n_spins < 0.0 || sensor.n_cav < 0.0) fail("[sensor.spins] counts must be non-negative");
    if (!(duration > 0.0)) fail("[run] duration must be positive");
    if (!(band_lo >= 0.0 && band_hi > band_lo)) fail("[analysis] band must be increasing");
    if (!(segment_seconds > 0.0)) fail("[analysis] segment must be positive");
    for (const auto* n : {&mw_noise, &bias_amp_noise, &bias_phase_noise}) {
        if (n->file.empty() && n->f_hi > 0.0 && n->f_hi > 0.5 * sample_rate) fail("noise band exceeds Nyquist");
    }
    for (double b : sweep_bandwidths) {
        if (b < 0.0 || b > 0.5 * sample_rate) fail("[sweep] bandwidths must lie in [0, Nyquist]");
    }
}

}  // namespace nvmag
