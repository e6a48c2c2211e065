#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nvmag/constants.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/pipeline.hpp"
#include "nvmag/types.hpp"

namespace nvmag {

/// Columns hold the signed tau responses (rms, normalized units) to the test
/// field along lab axis j at test_freqs[j].
struct ResponseMatrix {
    Mat3 m = Mat3::Zero();
    Vec3 test_freqs = Vec3::Zero();      // Hz
    Vec3 test_amplitude = Vec3::Zero();  // T rms, per lab axis
    Mat3 phase_offsets = Mat3::Zero();   // rad, relative to the reference orientation, wrapped to (-pi, pi]
    // Sign of the reference orientation against a zero-phase sine test field
    // starting at t = 0; 0 where unknown.
    Vec3 drive_signs = Vec3::Zero();

    Mat3 b_app() const { return test_amplitude.asDiagonal(); }
};

/// Phase tolerance of the multiples-of-pi rule.
inline constexpr double kDefaultSignTolerance = 15.0 * kPi / 180.0;

/// Tone amplitude and phase of each tau component at each test frequency over
/// the valid frames; signs from the multiples-of-pi rule against the
/// largest-amplitude orientation of every column.
ResponseMatrix build_response_matrix(std::span<const TauVector> taus, const Vec3& test_freqs,
                                     const Vec3& test_amplitude_rms,
                                     double sign_tolerance = kDefaultSignTolerance);

struct GeometryFitOptions {
    int starts = 24;                      // multistart rotations per sign pattern
    double gradient_tolerance = 1e-10;
    int max_iterations = 200;
    Vec3 bias_dir_lab = Vec3::UnitZ();    // direction of the bias coil field
};

struct CalibrationResult {
    Mat3 u = Mat3::Identity();            // diamond -> lab
    double b0_mag = 0.0;                  // T, bias amplitude
    Mat3 a_matrix = Mat3::Identity();     // T per normalized tau
    Mat3 c_matrix = Mat3::Zero();
    double residual = 0.0;                // rms of (A M - B_app) / amplitude
    Vec3 column_signs = Vec3::Ones();     // applied to M before fitting
    Vec3 projections = Vec3::Zero();      // n_i^T U^T b_hat
    bool projections_descending = true;   // labels agree with |projection| order
    Mat3 a_axis = Mat3::Zero();           // single-axis calibration from hyperfine
    double b0_hyperfine = 0.0;            // T, bias amplitude
    Vec3 bias_dir_lab = Vec3::UnitZ();
    bool c_flagged = false;               // some |C| entry above 0.3

    double b0_rms() const { return b0_mag / std::sqrt(2.0); }
};

/// A = U N3^{-T} diag(n_i^T U^T b_hat b0).
Mat3 geometric_matrix(const Mat3& u, double b0, const Vec3& bias_dir_lab, const NvBasis& basis);

/// Best (U, B0) over all column-sign patterns and multistart rotations.
/// Patterns that fit equally well (a half turn about the bias axis) are
/// separated with m.drive_signs when available.
CalibrationResult fit_geometry(const ResponseMatrix& m, const NvBasis& basis, const GeometryFitOptions& opt = {});

/// C = B_app M^-1 A^-1 - I for the sign-resolved M.
Mat3 fit_correction(const ResponseMatrix& m, const CalibrationResult& cal);

/// fit_geometry followed by fit_correction.
CalibrationResult calibrate(const ResponseMatrix& m, const NvBasis& basis, const GeometryFitOptions& opt = {});

struct HyperfineFit {
    std::array<double, 3> spacing{};     // linearized units
    std::array<bool, 3> resolved{};
    Vec3 projection_t = Vec3::Zero();    // |n_i^T U^T B0| in tesla
    double b0_mag = 0.0;                 // T amplitude, 0 when fewer than three resolved
    Vec3 unit_projections = Vec3::Zero();
    Mat3 a_axis = Mat3::Zero();
    std::vector<std::string> warnings;
};

/// Fits a three-Lorentzian triplet (common width and spacing) to every slot
/// of the averaged clean linearized curve, per orientation. cfg supplies the
/// nominal resonance positions and spacing used as starting values.
HyperfineFit hyperfine_single_axis(std::span<const LinearizedFrame> clean, const PipelineConfig& cfg,
                                   const PhysicalConstants& pc);

/// B = (I + C) A tau. Throws if tau is not valid on every orientation.
Vec3 reconstruct(const TauVector& tau, const CalibrationResult& cal);

void write_calibration(const CalibrationResult& cal, const std::string& path);
CalibrationResult read_calibration(const std::string& path);

}  // namespace nvmag
