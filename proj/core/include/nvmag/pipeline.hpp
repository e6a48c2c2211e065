#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvmag/trace.hpp"
#include "nvmag/types.hpp"

namespace nvmag {

/// One bias period of samples.
struct Frame {
    std::vector<cplx> samples;
    double start_time = 0.0;
    std::size_t index = 0;
};

/// Number of whole frames in the trace; throws if shorter than one period.
std::size_t frame_count(const ReflectionTrace& trace, double omega_m);
std::size_t frame_length(double sample_rate, double omega_m);
Frame frame_at(const ReflectionTrace& trace, double omega_m, std::size_t k);
std::vector<Frame> parse_frames(const ReflectionTrace& trace, double omega_m);

/// Linearized bias coordinate. On the falling half (t in [0, T/2]) the
/// coordinate is -cos(omega_m t), on the rising half cos(omega_m t); both run
/// from -1 to 1 as time advances.
struct LinearizedFrame {
    std::array<std::vector<double>, 2> half;  // [0] falling, [1] rising; |y| on the grid
    double dl = 0.0;                          // grid step
    double start_time = 0.0;
    std::size_t index = 0;

    std::size_t points() const { return half[0].size(); }
    double coord(double j) const { return -1.0 + j * dl; }
};

/// Grid points per half for a given sampling and oversampling factor.
std::size_t linear_grid_points(double sample_rate, double omega_m, int oversample);

/// Analytic arccos warp for a cosine bias with phase zero at t = 0.
LinearizedFrame linearize(const Frame& frame, double sample_rate, double omega_m, std::size_t points);

/// Warp from a sampled bias reference (one value per frame sample). The
/// reference is normalized by its peak magnitude and must fall monotonically
/// to its minimum and then rise monotonically.
LinearizedFrame linearize(const Frame& frame, std::span<const double> bias_reference, std::size_t points);

/// Peak slots per orientation, in the order used by combine_tau.
enum PeakSlot : int { kMinusDown = 0, kPlusDown = 1, kPlusUp = 2, kMinusUp = 3 };

/// Linearized coordinate of a slot's resonance for signed beta_i.
double nominal_coord(int slot, double beta);
/// Frame-relative time (s) of a slot at linearized coordinate l.
double coord_to_time(int slot, double l, double omega_m);

struct MatchedTemplate {
    std::vector<double> taps;  // zero mean, unit energy
    int fit_halfwidth = 1;     // parabola half-window in grid points
    double dl = 0.0;
    std::size_t frames_used = 0;

    int half_length() const { return static_cast<int>(taps.size() / 2); }
};

struct PipelineConfig {
    double omega_m = 0.0;
    int oversample = 4;
    std::array<double, 3> beta{};        // signed (omega_c - D) / (gamma B0 . n_i)
    std::array<double, 3> hf_spacing{};  // hyperfine spacing in linearized units (positive)
    double template_halfwidth = 2.5;     // template half-length in hyperfine spacings
    double search_halfwidth = 0.5;       // tracking window in hyperfine spacings
    double threshold = 0.6;              // minimum normalized correlation
    double fit_level = 0.95;             // parabola spans lags with template autocorrelation above this
    std::size_t min_template_frames = 4;

    void validate() const;
};

/// Averages the four slot segments of one orientation over clean frames.
/// centers holds the refined coordinates of the four slots.
MatchedTemplate build_template(std::span<const LinearizedFrame> clean, int orientation, const PipelineConfig& cfg,
                               std::array<double, 4>* centers = nullptr);

struct PeakEstimate {
    double coord = 0.0;    // linearized units
    double time = 0.0;     // s from frame start
    double quality = 0.0;  // normalized correlation at the vertex sample
    bool valid = false;
};

struct FramePeaks {
    std::array<std::array<PeakEstimate, 4>, 3> peaks{};
    std::size_t frame_index = 0;
    double start_time = 0.0;
    double period = 0.0;
};

/// Matched filter plus parabola vertex for every slot of every orientation.
/// expected holds the window centers per orientation and slot.
FramePeaks locate_peaks(const LinearizedFrame& lf, const std::array<MatchedTemplate, 3>& templates,
                        const std::array<std::array<double, 4>, 3>& expected, const PipelineConfig& cfg);

struct TauVector {
    Vec3 tau = Vec3::Zero();
    std::array<bool, 3> valid{};
    std::size_t frame_index = 0;
    double t = 0.0;  // frame midpoint

    bool all_valid() const { return valid[0] && valid[1] && valid[2]; }
};

/// (l_{-,down} + l_{+,down} - l_{+,up} - l_{-,up}) / 4 per orientation.
TauVector combine_tau(const FramePeaks& p);
/// The same combination on slot times instead of coordinates (seconds).
Vec3 combine_tau_time(const FramePeaks& p);

/// Same combination for one orientation's four values in slot order.
double combine4(const std::array<double, 4>& v);

/// Frequency responses; times are the four slot times in slot order (s).
double response_external(double omega, const std::array<double, 4>& times);
double response_amp(double omega, const std::array<double, 4>& times, double beta);
double response_phase(double omega, const std::array<double, 4>& times, double alpha);

/// Slot times of an ideal cosine sweep for signed beta.
std::array<double, 4> nominal_times(double beta, double omega_m);

/// Stateful processor: templates, baseline and peak tracking.
class Pipeline {
public:
    Pipeline(PipelineConfig cfg, double sample_rate);

    const PipelineConfig& config() const { return cfg_; }
    std::size_t grid_points() const { return points_; }

    LinearizedFrame linearize(const Frame& f) const;

    /// Builds templates from clean frames and records the clean tau baseline.
    void calibrate(std::span<const Frame> clean);
    bool ready() const { return ready_; }

    const std::array<MatchedTemplate, 3>& templates() const { return templates_; }
    const std::array<std::array<double, 4>, 3>& reference_coords() const { return reference_; }
    const Vec3& baseline() const { return baseline_; }

    /// Peaks for one frame, updating the tracked window centers.
    FramePeaks peaks(const Frame& f);
    /// Baseline-subtracted tau for one frame.
    TauVector process(const Frame& f);
    std::vector<TauVector> process(const ReflectionTrace& trace);

    void reset_tracking();

private:
    PipelineConfig cfg_;
    double sample_rate_;
    std::size_t points_;
    std::array<MatchedTemplate, 3> templates_{};
    std::array<std::array<double, 4>, 3> reference_{};
    std::array<std::array<double, 4>, 3> tracked_{};
    Vec3 baseline_ = Vec3::Zero();
    bool ready_ = false;
};

/// CSV: frame_index,t_seconds,tau1,tau2,tau3,valid_flags (bit i set when
/// orientation i + 1 is valid).
void write_tau_csv(std::span<const TauVector> taus, const std::string& path);
std::vector<TauVector> read_tau_csv(const std::string& path);

}  // namespace nvmag
