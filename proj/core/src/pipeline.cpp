#include "nvmag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

double catmull_rom(std::span<const double> y, double x) {
    const auto n = static_cast<long>(y.size());
    x = std::clamp(x, 0.0, static_cast<double>(n - 1));
    const long i = std::min(static_cast<long>(x), n - 2 < 0 ? 0 : n - 2);
    const double f = x - static_cast<double>(i);
    auto at = [&](long k) { return y[static_cast<std::size_t>(std::clamp(k, 0L, n - 1))]; };
    const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    return 0.5 * (2.0 * p1 + (p2 - p0) * f + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f * f +
                  (3.0 * (p1 - p2) + p3 - p0) * f * f * f);
}

std::vector<double> magnitudes(const Frame& f) {
    std::vector<double> m(f.samples.size());
    std::transform(f.samples.begin(), f.samples.end(), m.begin(), [](cplx v) { return std::abs(v); });
    return m;
}

int half_of(int slot) { return slot <= kPlusDown ? 0 : 1; }

// Normalized correlation of the template against curve centred at grid index p.
double correlation(std::span<const double> curve, const std::vector<double>& taps, long p) {
    const long h = static_cast<long>(taps.size() / 2);
    const long lo = p - h;
    double mean = 0.0;
    for (std::size_t j = 0; j < taps.size(); ++j) mean += curve[static_cast<std::size_t>(lo) + j];
    mean /= static_cast<double>(taps.size());
    double num = 0.0, energy = 0.0;
    for (std::size_t j = 0; j < taps.size(); ++j) {
        const double x = curve[static_cast<std::size_t>(lo) + j] - mean;
        num += taps[j] * x;
        energy += x * x;
    }
    return energy > 0.0 ? num / std::sqrt(energy) : 0.0;
}

// Least-squares parabola over symmetric offsets -w..w; returns vertex offset.
std::optional<double> parabola_vertex(std::span<const double> v, int w) {
    double sx2 = 0.0, sx4 = 0.0, sxy = 0.0, sy = 0.0, sx2y = 0.0;
    const double n = 2.0 * w + 1.0;
    for (int x = -w; x <= w; ++x) {
        const double y = v[static_cast<std::size_t>(x + w)];
        const double x2 = static_cast<double>(x) * x;
        sx2 += x2;
        sx4 += x2 * x2;
        sxy += x * y;
        sy += y;
        sx2y += x2 * y;
    }
    const double a1 = sxy / sx2;
    const double a2 = (sx2y - sx2 * sy / n) / (sx4 - sx2 * sx2 / n);
    if (!(a2 < 0.0)) return std::nullopt;
    return -a1 / (2.0 * a2);
}

}  // namespace

std::size_t frame_length(double sample_rate, double omega_m) {
    if (!(sample_rate > 0.0) || !(omega_m > 0.0)) throw Error("frame_length: rates must be positive");
    const auto n = static_cast<std::size_t>(std::llround(kTwoPi / omega_m * sample_rate));
    if (n < 8) throw Error("frame_length: fewer than 8 samples per bias period");
    return n;
}

std::size_t frame_count(const ReflectionTrace& trace, double omega_m) {
    const std::size_t len = frame_length(trace.sample_rate, omega_m);
    if (trace.samples.size() < len) throw Error("parse_frames: trace shorter than one bias period");
    return trace.samples.size() / len;
}

Frame frame_at(const ReflectionTrace& trace, double omega_m, std::size_t k) {
    const std::size_t len = frame_length(trace.sample_rate, omega_m);
    if ((k + 1) * len > trace.samples.size()) throw Error("frame_at: frame index out of range");
    Frame f;
    const auto first = trace.samples.begin() + static_cast<std::ptrdiff_t>(k * len);
    f.samples.assign(first, first + static_cast<std::ptrdiff_t>(len));
    f.start_time = trace.t0 + static_cast<double>(k * len) / trace.sample_rate;
    f.index = k;
    return f;
}

std::vector<Frame> parse_frames(const ReflectionTrace& trace, double omega_m) {
    const std::size_t n = frame_count(trace, omega_m);
    std::vector<Frame> frames;
    frames.reserve(n);
    for (std::size_t k = 0; k < n; ++k) frames.push_back(frame_at(trace, omega_m, k));
    return frames;
}

std::size_t linear_grid_points(double sample_rate, double omega_m, int oversample) {
    if (oversample < 1) throw Error("linearize: oversample must be >= 1");
    return static_cast<std::size_t>(oversample) * (frame_length(sample_rate, omega_m) / 2) + 1;
}

LinearizedFrame linearize(const Frame& frame, double sample_rate, double omega_m, std::size_t points) {
    if (points < 3) throw Error("linearize: need at least 3 grid points");
    if (frame.samples.empty()) throw Error("linearize: empty frame");
    const auto mag = magnitudes(frame);
    const double phase0 = std::remainder(omega_m * frame.start_time, kTwoPi);
    LinearizedFrame lf;
    lf.dl = 2.0 / static_cast<double>(points - 1);
    lf.start_time = frame.start_time;
    lf.index = frame.index;
    for (int h = 0; h < 2; ++h) {
        auto& out = lf.half[static_cast<std::size_t>(h)];
        out.resize(points);
        for (std::size_t j = 0; j < points; ++j) {
            const double l = std::clamp(lf.coord(static_cast<double>(j)), -1.0, 1.0);
            const double theta = h == 0 ? std::acos(-l) : kTwoPi - std::acos(l);
            out[j] = catmull_rom(mag, (theta - phase0) / omega_m * sample_rate);
        }
    }
    return lf;
}

LinearizedFrame linearize(const Frame& frame, std::span<const double> bias_reference, std::size_t points) {
    if (points < 3) throw Error("linearize: need at least 3 grid points");
    const std::size_t n = frame.samples.size();
    if (bias_reference.size() != n || n < 4) throw Error("linearize: bias reference must match the frame length");
    double peak = 0.0;
    for (double b : bias_reference) peak = std::max(peak, std::abs(b));
    if (!(peak > 0.0)) throw Error("linearize: bias reference is identically zero");
    std::vector<double> b(n);
    std::transform(bias_reference.begin(), bias_reference.end(), b.begin(), [&](double v) { return v / peak; });
    const auto kmin = static_cast<std::size_t>(std::min_element(b.begin(), b.end()) - b.begin());
    for (std::size_t k = 1; k <= kmin; ++k) {
        if (!(b[k] < b[k - 1])) throw Error("linearize: bias reference not monotone on the falling half-cycle");
    }
    for (std::size_t k = kmin + 1; k < n; ++k) {
        if (!(b[k] > b[k - 1])) throw Error("linearize: bias reference not monotone on the rising half-cycle");
    }
    const auto mag = magnitudes(frame);
    LinearizedFrame lf;
    lf.dl = 2.0 / static_cast<double>(points - 1);
    lf.start_time = frame.start_time;
    lf.index = frame.index;
    for (int h = 0; h < 2; ++h) {
        // Coordinates increase with sample index on both halves.
        std::vector<double> l;
        std::size_t k0 = h == 0 ? 0 : kmin;
        std::size_t k1 = h == 0 ? kmin : n - 1;
        for (std::size_t k = k0; k <= k1; ++k) l.push_back(h == 0 ? -b[k] : b[k]);
        auto& out = lf.half[static_cast<std::size_t>(h)];
        out.resize(points);
        for (std::size_t j = 0; j < points; ++j) {
            const double target = lf.coord(static_cast<double>(j));
            double x;
            if (target <= l.front()) {
                x = 0.0;
            } else if (target >= l.back()) {
                x = static_cast<double>(l.size() - 1);
            } else {
                const auto it = std::upper_bound(l.begin(), l.end(), target);
                const auto i = static_cast<std::size_t>(it - l.begin()) - 1;
                x = static_cast<double>(i) + (target - l[i]) / (l[i + 1] - l[i]);
            }
            out[j] = catmull_rom(mag, static_cast<double>(k0) + x);
        }
    }
    return lf;
}

double nominal_coord(int slot, double beta) {
    switch (slot) {
        case kMinusDown: return -beta;
        case kPlusDown: return beta;
        case kPlusUp: return -beta;
        case kMinusUp: return beta;
        default: throw Error("nominal_coord: bad slot");
    }
}

double coord_to_time(int slot, double l, double omega_m) {
    l = std::clamp(l, -1.0, 1.0);
    const double theta = half_of(slot) == 0 ? std::acos(-l) : kTwoPi - std::acos(l);
    return theta / omega_m;
}

void PipelineConfig::validate() const {
    if (!(omega_m > 0.0)) throw Error("PipelineConfig: omega_m must be positive");
    if (oversample < 1) throw Error("PipelineConfig: oversample must be >= 1");
    for (int i = 0; i < 3; ++i) {
        if (!(std::abs(beta[static_cast<std::size_t>(i)]) < 1.0)) {
            throw Error("PipelineConfig: |beta| must be below 1 for every measured orientation");
        }
        if (!(hf_spacing[static_cast<std::size_t>(i)] > 0.0)) throw Error("PipelineConfig: hf_spacing must be positive");
    }
    if (!(template_halfwidth > 0.0) || !(search_halfwidth > 0.0)) throw Error("PipelineConfig: window widths must be positive");
    if (threshold < -1.0 || threshold > 1.0) throw Error("PipelineConfig: threshold must lie in [-1, 1]");
    if (!(fit_level > 0.0) || !(fit_level < 1.0)) throw Error("PipelineConfig: fit_level must lie in (0, 1)");
}

MatchedTemplate build_template(std::span<const LinearizedFrame> clean, int orientation, const PipelineConfig& cfg,
                               std::array<double, 4>* centers) {
    cfg.validate();
    if (orientation < 0 || orientation > 2) throw Error("build_template: orientation must be 0, 1 or 2");
    if (clean.size() < std::max<std::size_t>(cfg.min_template_frames, 1)) {
        throw Error("build_template: not enough clean frames");
    }
    const std::size_t m = clean.front().points();
    const double dl = clean.front().dl;
    std::array<std::vector<double>, 2> mean{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
    for (const auto& lf : clean) {
        if (lf.points() != m) throw Error("build_template: frames have different grids");
        for (int h = 0; h < 2; ++h) {
            for (std::size_t j = 0; j < m; ++j) mean[h][j] += lf.half[h][j];
        }
    }
    for (auto& v : mean) {
        for (double& x : v) x /= static_cast<double>(clean.size());
    }

    const auto o = static_cast<std::size_t>(orientation);
    const double s = cfg.hf_spacing[o];
    const int hl = std::max(2, static_cast<int>(std::lround(cfg.template_halfwidth * s / dl)));
    const int search = std::max(1, static_cast<int>(std::lround(0.5 * s / dl)));
    std::vector<double> avg(static_cast<std::size_t>(2 * hl + 1), 0.0);
    std::array<double, 4> refined{};
    for (int slot = 0; slot < 4; ++slot) {
        const auto& curve = mean[static_cast<std::size_t>(half_of(slot))];
        const double c = nominal_coord(slot, cfg.beta[o]);
        const long jc = std::lround((c + 1.0) / dl);
        long best = -1;
        for (long j = jc - search; j <= jc + search; ++j) {
            if (j < 1 || j + 1 >= static_cast<long>(m)) continue;
            if (best < 0 || curve[static_cast<std::size_t>(j)] > curve[static_cast<std::size_t>(best)]) best = j;
        }
        if (best < 0) throw Error("build_template: resonance window outside the grid");
        const double y0 = curve[static_cast<std::size_t>(best - 1)], y1 = curve[static_cast<std::size_t>(best)],
                     y2 = curve[static_cast<std::size_t>(best + 1)];
        const double den = y0 - 2.0 * y1 + y2;
        const double off = den < 0.0 ? std::clamp(0.5 * (y0 - y2) / den, -0.5, 0.5) : 0.0;
        const double center = static_cast<double>(best) + off;
        refined[static_cast<std::size_t>(slot)] = -1.0 + center * dl;
        for (int j = -hl; j <= hl; ++j) {
            avg[static_cast<std::size_t>(j + hl)] += catmull_rom(curve, center + j);
        }
    }

    MatchedTemplate t;
    t.dl = dl;
    t.frames_used = clean.size();
    t.taps.resize(avg.size());
    const double n = static_cast<double>(avg.size());
    double mu = 0.0;
    for (double v : avg) mu += v;
    mu /= n;
    for (std::size_t j = 0; j < avg.size(); ++j) {
        const double w = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(j + 1) / (n + 1.0));
        t.taps[j] = w * (avg[j] - mu);
    }
    double mu2 = 0.0;
    for (double v : t.taps) mu2 += v;
    mu2 /= n;
    double energy = 0.0;
    for (double& v : t.taps) {
        v -= mu2;
        energy += v * v;
    }
    if (!(energy > 0.0)) throw Error("build_template: clean frames carry no resonance structure");
    for (double& v : t.taps) v /= std::sqrt(energy);

    // Parabola window: lags where the template autocorrelation stays above
    // fit_level of its peak.
    int w = 1;
    for (int k = 1; k < hl; ++k) {
        double r = 0.0;
        for (std::size_t j = 0; j + static_cast<std::size_t>(k) < t.taps.size(); ++j) r += t.taps[j] * t.taps[j + k];
        if (r < cfg.fit_level) break;
        w = k;
    }
    t.fit_halfwidth = w;
    if (centers) *centers = refined;
    return t;
}

FramePeaks locate_peaks(const LinearizedFrame& lf, const std::array<MatchedTemplate, 3>& templates,
                        const std::array<std::array<double, 4>, 3>& expected, const PipelineConfig& cfg) {
    FramePeaks fp;
    fp.frame_index = lf.index;
    fp.start_time = lf.start_time;
    fp.period = kTwoPi / cfg.omega_m;
    const auto m = static_cast<long>(lf.points());
    std::vector<double> rho;
    for (std::size_t o = 0; o < 3; ++o) {
        const auto& tpl = templates[o];
        if (tpl.taps.empty()) throw Error("locate_peaks: missing template");
        if (std::abs(tpl.dl - lf.dl) > 1e-12) throw Error("locate_peaks: template grid differs from frame grid");
        const long h = tpl.half_length();
        const int w = tpl.fit_halfwidth;
        const long r = std::max(1L, std::lround(cfg.search_halfwidth * cfg.hf_spacing[o] / lf.dl));
        for (int slot = 0; slot < 4; ++slot) {
            auto& est = fp.peaks[o][static_cast<std::size_t>(slot)];
            const auto& curve = lf.half[static_cast<std::size_t>(half_of(slot))];
            const long jc = std::lround((expected[o][static_cast<std::size_t>(slot)] + 1.0) / lf.dl);
            const long lo = jc - r - w, hi = jc + r + w;
            if (lo - h < 0 || hi + h >= m) continue;
            rho.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
            for (long p = lo; p <= hi; ++p) rho[static_cast<std::size_t>(p - lo)] = correlation(curve, tpl.taps, p);
            long best = jc - r;
            for (long p = jc - r; p <= jc + r; ++p) {
                if (rho[static_cast<std::size_t>(p - lo)] > rho[static_cast<std::size_t>(best - lo)]) best = p;
            }
            est.quality = rho[static_cast<std::size_t>(best - lo)];
            const auto v = parabola_vertex(std::span<const double>(rho).subspan(static_cast<std::size_t>(best - w - lo),
                                                                               static_cast<std::size_t>(2 * w + 1)),
                                           w);
            if (!v || std::abs(*v) > w) continue;
            est.coord = -1.0 + (static_cast<double>(best) + *v) * lf.dl;
            est.time = coord_to_time(slot, est.coord, cfg.omega_m);
            est.valid = est.quality >= cfg.threshold;
        }
    }
    return fp;
}

double combine4(const std::array<double, 4>& v) { return (v[0] + v[1] - v[2] - v[3]) / 4.0; }

TauVector combine_tau(const FramePeaks& p) {
    TauVector t;
    t.frame_index = p.frame_index;
    t.t = p.start_time + 0.5 * p.period;
    for (std::size_t o = 0; o < 3; ++o) {
        const auto& pk = p.peaks[o];
        t.valid[o] = pk[0].valid && pk[1].valid && pk[2].valid && pk[3].valid;
        t.tau[static_cast<Eigen::Index>(o)] =
            t.valid[o] ? combine4({pk[0].coord, pk[1].coord, pk[2].coord, pk[3].coord}) : 0.0;
    }
    return t;
}

Vec3 combine_tau_time(const FramePeaks& p) {
    Vec3 r;
    for (std::size_t o = 0; o < 3; ++o) {
        const auto& pk = p.peaks[o];
        r[static_cast<Eigen::Index>(o)] = combine4({pk[0].time, pk[1].time, pk[2].time, pk[3].time});
    }
    return r;
}

namespace {

std::array<cplx, 4> phasors(double omega, const std::array<double, 4>& times) {
    std::array<cplx, 4> e;
    for (std::size_t k = 0; k < 4; ++k) e[k] = std::polar(1.0, omega * times[k]);
    return e;
}

}  // namespace

double response_external(double omega, const std::array<double, 4>& times) {
    const auto e = phasors(omega, times);
    return std::abs(e[0] + e[1] + e[2] + e[3]) / 4.0;
}

double response_amp(double omega, const std::array<double, 4>& times, double beta) {
    if (std::abs(beta) > 1.0) throw Error("response_amp: |beta| > 1, orientation never resonant");
    const auto e = phasors(omega, times);
    return std::abs(beta) * std::abs(e[0] - e[1] - e[2] + e[3]) / 4.0;
}

double response_phase(double omega, const std::array<double, 4>& times, double alpha) {
    if (std::abs(alpha) > 1.0) throw Error("response_phase: |alpha| > 1");
    const auto e = phasors(omega, times);
    return std::abs(alpha) * std::abs(e[0] + e[1] - e[2] - e[3]) / 4.0;
}

std::array<double, 4> nominal_times(double beta, double omega_m) {
    if (std::abs(beta) > 1.0) throw Error("nominal_times: |beta| > 1");
    std::array<double, 4> t;
    for (int slot = 0; slot < 4; ++slot) t[static_cast<std::size_t>(slot)] = coord_to_time(slot, nominal_coord(slot, beta), omega_m);
    return t;
}

Pipeline::Pipeline(PipelineConfig cfg, double sample_rate) : cfg_(cfg), sample_rate_(sample_rate) {
    cfg_.validate();
    points_ = linear_grid_points(sample_rate_, cfg_.omega_m, cfg_.oversample);
    reset_tracking();
}

LinearizedFrame Pipeline::linearize(const Frame& f) const { return nvmag::linearize(f, sample_rate_, cfg_.omega_m, points_); }

void Pipeline::reset_tracking() {
    for (std::size_t o = 0; o < 3; ++o) {
        for (int slot = 0; slot < 4; ++slot) {
            const double c = ready_ ? reference_[o][static_cast<std::size_t>(slot)] : nominal_coord(slot, cfg_.beta[o]);
            tracked_[o][static_cast<std::size_t>(slot)] = c;
        }
    }
}

void Pipeline::calibrate(std::span<const Frame> clean) {
    std::vector<LinearizedFrame> lin;
    lin.reserve(clean.size());
    for (const auto& f : clean) lin.push_back(linearize(f));
    for (int o = 0; o < 3; ++o) {
        templates_[static_cast<std::size_t>(o)] = build_template(lin, o, cfg_, &reference_[static_cast<std::size_t>(o)]);
    }
    ready_ = true;
    baseline_.setZero();
    reset_tracking();
    Vec3 sum = Vec3::Zero();
    std::array<int, 3> count{};
    for (const auto& lf : lin) {
        const auto tv = combine_tau(locate_peaks(lf, templates_, reference_, cfg_));
        for (std::size_t o = 0; o < 3; ++o) {
            if (!tv.valid[o]) continue;
            sum[static_cast<Eigen::Index>(o)] += tv.tau[static_cast<Eigen::Index>(o)];
            ++count[o];
        }
    }
    for (std::size_t o = 0; o < 3; ++o) {
        if (count[o] == 0) {
            std::ostringstream os;
            os << "Pipeline: orientation " << o + 1 << " not detected in any clean frame";
            throw Error(os.str());
        }
        baseline_[static_cast<Eigen::Index>(o)] = sum[static_cast<Eigen::Index>(o)] / count[o];
    }
}

FramePeaks Pipeline::peaks(const Frame& f) {
    if (!ready_) throw Error("Pipeline: calibrate() with clean frames first");
    const auto fp = locate_peaks(linearize(f), templates_, tracked_, cfg_);
    for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t s = 0; s < 4; ++s) {
            tracked_[o][s] = fp.peaks[o][s].valid ? fp.peaks[o][s].coord : reference_[o][s];
        }
    }
    return fp;
}

TauVector Pipeline::process(const Frame& f) {
    TauVector t = combine_tau(peaks(f));
    for (std::size_t o = 0; o < 3; ++o) {
        if (t.valid[o]) t.tau[static_cast<Eigen::Index>(o)] -= baseline_[static_cast<Eigen::Index>(o)];
    }
    return t;
}

std::vector<TauVector> Pipeline::process(const ReflectionTrace& trace) {
    const std::size_t n = frame_count(trace, cfg_.omega_m);
    std::vector<TauVector> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(process(frame_at(trace, cfg_.omega_m, k)));
    return out;
}

void write_tau_csv(std::span<const TauVector> taus, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("tau csv: cannot open for writing: " + path);
    os << "frame_index,t_seconds,tau1,tau2,tau3,valid_flags\n" << std::setprecision(17);
    for (const auto& t : taus) {
        const int flags = (t.valid[0] ? 1 : 0) | (t.valid[1] ? 2 : 0) | (t.valid[2] ? 4 : 0);
        os << t.frame_index << ',' << t.t << ',' << t.tau[0] << ',' << t.tau[1] << ',' << t.tau[2] << ',' << flags
           << '\n';
    }
    if (!os) throw Error("tau csv: write failed: " + path);
}

std::vector<TauVector> read_tau_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("tau csv: cannot open: " + path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("frame_index,t_seconds,tau1,tau2,tau3,valid_flags", 0) != 0) {
        throw Error("tau csv: bad header in " + path);
    }
    std::vector<TauVector> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        TauVector t;
        int flags = 0;
        if (!(ls >> t.frame_index >> t.t >> t.tau[0] >> t.tau[1] >> t.tau[2] >> flags)) {
            throw Error("tau csv: malformed row in " + path);
        }
        for (int o = 0; o < 3; ++o) t.valid[static_cast<std::size_t>(o)] = (flags >> o) & 1;
        out.push_back(t);
    }
    return out;
}

}  // namespace nvmag
