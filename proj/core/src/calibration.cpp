#include "nvmag/calibration.hpp"

#include <ceres/ceres.h>
#include <ceres/rotation.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

double wrap_pi(double x) { return std::remainder(x, kTwoPi); }

struct GeometryCost {
    Mat3 ms;       // sign-resolved response matrix
    Mat3 n3;       // canonical axes as columns
    Mat3 n3inv_t;  // N3^{-T}
    Vec3 b_hat;
    Vec3 amp;

    template <class T>
    bool operator()(const T* r, const T* b0, T* res) const {
        T rot[9];
        ceres::AngleAxisToRotationMatrix(r, rot);  // column-major
        auto R = [&](int i, int j) { return rot[i + 3 * j]; };
        T utb[3];
        for (int i = 0; i < 3; ++i) {
            utb[i] = R(0, i) * b_hat[0] + R(1, i) * b_hat[1] + R(2, i) * b_hat[2];
        }
        T d[3];
        for (int i = 0; i < 3; ++i) d[i] = b0[0] * (n3(0, i) * utb[0] + n3(1, i) * utb[1] + n3(2, i) * utb[2]);
        T a[3][3];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                a[i][j] = R(i, 0) * n3inv_t(0, j) * d[j] + R(i, 1) * n3inv_t(1, j) * d[j] + R(i, 2) * n3inv_t(2, j) * d[j];
            }
        }
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                T v = a[i][0] * ms(0, j) + a[i][1] * ms(1, j) + a[i][2] * ms(2, j);
                if (i == j) v -= T(amp[j]);
                res[i + 3 * j] = v / amp[j];
            }
        }
        return true;
    }
};

double radical_inverse(unsigned n, unsigned base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (n > 0) {
        r += f * (n % base);
        n /= base;
        f *= inv;
    }
    return r;
}

// Low-discrepancy rotation vectors spread over SO(3) (Shoemake mapping of a
// Halton sequence onto unit quaternions).
std::vector<Vec3> start_rotations(int count) {
    std::vector<Vec3> out;
    for (int k = 0; k < count; ++k) {
        const double u1 = radical_inverse(static_cast<unsigned>(k + 1), 2);
        const double u2 = radical_inverse(static_cast<unsigned>(k + 1), 3);
        const double u3 = radical_inverse(static_cast<unsigned>(k + 1), 5);
        const double q[4] = {std::sqrt(u1) * std::cos(kTwoPi * u3), std::sqrt(1.0 - u1) * std::sin(kTwoPi * u2),
                             std::sqrt(1.0 - u1) * std::cos(kTwoPi * u2), std::sqrt(u1) * std::sin(kTwoPi * u3)};
        double aa[3];
        ceres::QuaternionToAngleAxis(q, aa);
        out.emplace_back(aa[0], aa[1], aa[2]);
    }
    return out;
}

Mat3 rotation_from_vector(const Vec3& r) {
    double rot[9];
    ceres::AngleAxisToRotationMatrix(r.data(), rot);
    Mat3 u;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) u(i, j) = rot[i + 3 * j];
    }
    return u;
}

struct TripletCost {
    double x, y;
    template <class T>
    bool operator()(const T* p, T* res) const {
        // p = {center, spacing, width, a_-1, a_0, a_+1, baseline, slope}
        T v = p[6] + p[7] * T(x);
        for (int m = -1; m <= 1; ++m) {
            const T z = (T(x) - p[0] - T(static_cast<double>(m)) * p[1]) / p[2];
            v += p[4 + m] / (T(1.0) + z * z);
        }
        res[0] = v - T(y);
        return true;
    }
};

}  // namespace

ResponseMatrix build_response_matrix(std::span<const TauVector> taus, const Vec3& test_freqs,
                                     const Vec3& test_amplitude_rms, double sign_tolerance) {
    if (taus.size() < 16) throw Error("build_response_matrix: too few tau samples");
    for (int j = 0; j < 3; ++j) {
        if (!(test_freqs[j] > 0.0) || !(test_amplitude_rms[j] > 0.0)) {
            throw Error("build_response_matrix: test frequencies and amplitudes must be positive");
        }
    }
    const double duration = taus.back().t - taus.front().t + (taus[1].t - taus[0].t);
    for (int j = 0; j < 3; ++j) {
        const double cycles = duration * test_freqs[j];
        if (std::abs(cycles - std::round(cycles)) > 1e-3 * std::max(1.0, cycles) + 1e-6) {
            throw Error("build_response_matrix: record does not span an integer number of test periods");
        }
    }
    // Mean of each valid component, then single-bin DFT over valid frames.
    Vec3 mean = Vec3::Zero();
    std::array<std::size_t, 3> count{};
    for (const auto& t : taus) {
        for (std::size_t o = 0; o < 3; ++o) {
            if (t.valid[o]) {
                mean[static_cast<Eigen::Index>(o)] += t.tau[static_cast<Eigen::Index>(o)];
                ++count[o];
            }
        }
    }
    for (std::size_t o = 0; o < 3; ++o) {
        if (count[o] < taus.size() / 2) throw Error("build_response_matrix: more than half the frames invalid");
        mean[static_cast<Eigen::Index>(o)] /= static_cast<double>(count[o]);
    }
    std::array<std::array<cplx, 3>, 3> x{};  // [orientation][test axis]
    const double t0 = taus.front().t;
    for (const auto& t : taus) {
        for (std::size_t o = 0; o < 3; ++o) {
            if (!t.valid[o]) continue;
            const double v = t.tau[static_cast<Eigen::Index>(o)] - mean[static_cast<Eigen::Index>(o)];
            for (int j = 0; j < 3; ++j) {
                x[o][static_cast<std::size_t>(j)] += v * std::polar(1.0, -kTwoPi * test_freqs[j] * (t.t - t0));
            }
        }
    }
    ResponseMatrix rm;
    rm.test_freqs = test_freqs;
    rm.test_amplitude = test_amplitude_rms;
    double column_peak = 0.0;
    for (const auto& row : x) {
        for (const auto& v : row) column_peak = std::max(column_peak, std::abs(v));
    }
    for (int j = 0; j < 3; ++j) {
        std::size_t ref = 0;
        for (std::size_t o = 1; o < 3; ++o) {
            if (std::abs(x[o][static_cast<std::size_t>(j)]) > std::abs(x[ref][static_cast<std::size_t>(j)])) ref = o;
        }
        const double ref_phase = std::arg(x[ref][static_cast<std::size_t>(j)]);
        const double ref_abs = std::abs(x[ref][static_cast<std::size_t>(j)]);
        if (ref_abs > 1e-9 * column_peak) {
            // A sine field starting at t = 0 has phase -pi/2 at time zero.
            const double phi = wrap_pi(ref_phase - kTwoPi * test_freqs[j] * t0 + kPi / 2.0);
            rm.drive_signs[j] = std::cos(phi) >= 0.0 ? 1.0 : -1.0;
        }
        for (std::size_t o = 0; o < 3; ++o) {
            const cplx v = x[o][static_cast<std::size_t>(j)];
            const double amp_rms = 2.0 * std::abs(v) / static_cast<double>(count[o]) / std::sqrt(2.0);
            const double d = wrap_pi(std::arg(v) - ref_phase);
            rm.phase_offsets(static_cast<Eigen::Index>(o), j) = d;
            double sign;
            // Entries this far down carry no usable phase; take the nearer multiple.
            const bool weak = std::abs(v) < 0.01 * ref_abs || ref_abs < 1e-9 * column_peak;
            if (weak) {
                sign = std::cos(d) >= 0.0 ? 1.0 : -1.0;
            } else if (std::abs(d) <= sign_tolerance) {
                sign = 1.0;
            } else if (std::abs(wrap_pi(d - kPi)) <= sign_tolerance) {
                sign = -1.0;
            } else {
                std::ostringstream os;
                os << "build_response_matrix: orientation " << o + 1 << " at " << test_freqs[j] << " Hz is "
                   << d * 180.0 / kPi << " deg from the reference, not a multiple of 180 within "
                   << sign_tolerance * 180.0 / kPi << " deg";
                throw Error(os.str());
            }
            rm.m(static_cast<Eigen::Index>(o), j) = sign * amp_rms;
        }
    }
    return rm;
}

Mat3 geometric_matrix(const Mat3& u, double b0, const Vec3& bias_dir_lab, const NvBasis& basis) {
    const Mat3 n3 = basis.n3();
    const Vec3 utb = u.transpose() * bias_dir_lab.normalized();
    Vec3 d;
    for (int i = 0; i < 3; ++i) d[i] = b0 * n3.col(i).dot(utb);
    return u * n3.transpose().inverse() * d.asDiagonal();
}

CalibrationResult fit_geometry(const ResponseMatrix& m, const NvBasis& basis, const GeometryFitOptions& opt) {
    if (std::abs(m.m.determinant()) < 1e-12 * std::pow(m.m.norm(), 3)) {
        throw Error("fit_geometry: response matrix is singular");
    }
    if (opt.starts < 1) throw Error("fit_geometry: need at least one start");
    const Mat3 n3 = basis.n3();
    const Mat3 n3inv_t = n3.transpose().inverse();
    const Vec3 b_hat = opt.bias_dir_lab.normalized();
    const auto starts = start_rotations(opt.starts);

    struct Candidate {
        double cost = std::numeric_limits<double>::infinity();
        CalibrationResult cal;
        bool converged = false;
        double grad = 0.0;
    };
    std::array<Candidate, 8> per_pattern{};
    for (int pattern = 0; pattern < 8; ++pattern) {
        Vec3 signs;
        for (int j = 0; j < 3; ++j) signs[j] = (pattern >> j) & 1 ? -1.0 : 1.0;
        const Mat3 ms = m.m * signs.asDiagonal();
        auto& cand = per_pattern[static_cast<std::size_t>(pattern)];
        for (const Vec3& r0 : starts) {
            double r[3] = {r0[0], r0[1], r0[2]};
            const Mat3 a1 = geometric_matrix(rotation_from_vector(r0), 1.0, b_hat, basis);
            const Mat3 am = a1 * ms;
            double b0 = (am.cwiseProduct(m.b_app())).sum() / am.squaredNorm();
            b0 = std::max(std::abs(b0), 1e-9);

            ceres::Problem problem;
            auto* cost = new ceres::AutoDiffCostFunction<GeometryCost, 9, 3, 1>(
                new GeometryCost{ms, n3, n3inv_t, b_hat, m.test_amplitude});
            problem.AddResidualBlock(cost, nullptr, r, &b0);
            problem.SetParameterLowerBound(&b0, 0, 1e-12);
            ceres::Solver::Options so;
            so.linear_solver_type = ceres::DENSE_QR;
            so.max_num_iterations = opt.max_iterations;
            so.function_tolerance = 1e-16;
            so.parameter_tolerance = 1e-16;
            so.gradient_tolerance = opt.gradient_tolerance * 1e-3;
            so.logging_type = ceres::SILENT;
            ceres::Solver::Summary summary;
            ceres::Solve(so, &problem, &summary);
            if (summary.final_cost < cand.cost) {
                cand.cost = summary.final_cost;
                cand.cal.u = rotation_from_vector(Vec3(r[0], r[1], r[2]));
                cand.cal.b0_mag = b0;
                cand.cal.column_signs = signs;
                cand.converged = summary.termination_type == ceres::CONVERGENCE;
                // Gradient at the optimum for the convergence diagnostic.
                double cost_val = 0.0;
                std::vector<double> grad(4);
                problem.Evaluate(ceres::Problem::EvaluateOptions(), &cost_val, nullptr, &grad, nullptr);
                cand.grad = 0.0;
                for (double g : grad) cand.grad = std::max(cand.grad, std::abs(g));
            }
        }
    }
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& c : per_pattern) best_cost = std::min(best_cost, c.cost);
    const double tie = best_cost * (1.0 + 1e-6) + 1e-24;
    const Candidate* chosen = nullptr;
    int chosen_agree = -1;
    for (const auto& c : per_pattern) {
        if (c.cost > tie) continue;
        int agree = 0;
        for (int j = 0; j < 3; ++j) agree += m.drive_signs[j] != 0.0 && c.cal.column_signs[j] == m.drive_signs[j];
        if (agree > chosen_agree) {
            chosen = &c;
            chosen_agree = agree;
        }
    }
    CalibrationResult best = chosen->cal;
    best_cost = chosen->cost;
    if (!chosen->converged && chosen->grad > opt.gradient_tolerance) {
        std::ostringstream os;
        os << "fit_geometry: optimizer did not converge (cost " << best_cost << ", max gradient " << chosen->grad << ")";
        throw Error(os.str());
    }
    best.bias_dir_lab = b_hat;
    best.a_matrix = geometric_matrix(best.u, best.b0_mag, b_hat, basis);
    best.residual = std::sqrt(2.0 * best_cost / 9.0);
    const Vec3 utb = best.u.transpose() * b_hat;
    for (int i = 0; i < 3; ++i) best.projections[i] = n3.col(i).dot(utb);
    best.projections_descending = std::abs(best.projections[0]) >= std::abs(best.projections[1]) &&
                                  std::abs(best.projections[1]) >= std::abs(best.projections[2]);
    return best;
}

Mat3 fit_correction(const ResponseMatrix& m, const CalibrationResult& cal) {
    const Mat3 ms = m.m * cal.column_signs.asDiagonal();
    if (std::abs(ms.determinant()) < 1e-12 * std::pow(ms.norm(), 3)) throw Error("fit_correction: singular response matrix");
    if (std::abs(cal.a_matrix.determinant()) < 1e-300) throw Error("fit_correction: singular geometric matrix");
    return m.b_app() * ms.inverse() * cal.a_matrix.inverse() - Mat3::Identity();
}

CalibrationResult calibrate(const ResponseMatrix& m, const NvBasis& basis, const GeometryFitOptions& opt) {
    CalibrationResult cal = fit_geometry(m, basis, opt);
    cal.c_matrix = fit_correction(m, cal);
    cal.c_flagged = cal.c_matrix.cwiseAbs().maxCoeff() > 0.3;
    return cal;
}

HyperfineFit hyperfine_single_axis(std::span<const LinearizedFrame> clean, const PipelineConfig& cfg,
                                   const PhysicalConstants& pc) {
    cfg.validate();
    if (clean.empty()) throw Error("hyperfine_single_axis: no frames");
    const std::size_t npts = clean.front().points();
    const double dl = clean.front().dl;
    std::array<std::vector<double>, 2> mean{std::vector<double>(npts, 0.0), std::vector<double>(npts, 0.0)};
    for (const auto& lf : clean) {
        if (lf.points() != npts) throw Error("hyperfine_single_axis: frames have different grids");
        for (int h = 0; h < 2; ++h) {
            for (std::size_t j = 0; j < npts; ++j) mean[h][j] += lf.half[h][j] / static_cast<double>(clean.size());
        }
    }
    HyperfineFit out;
    for (std::size_t o = 0; o < 3; ++o) {
        const double s0 = cfg.hf_spacing[o];
        double sum = 0.0;
        int used = 0;
        for (int slot = 0; slot < 4; ++slot) {
            const auto& curve = mean[slot <= kPlusDown ? 0 : 1];
            const double c0 = nominal_coord(slot, cfg.beta[o]);
            // Refine the centre on the curve maximum within half a spacing.
            long jc = std::lround((c0 + 1.0) / dl);
            const long r = std::max(1L, std::lround(0.5 * s0 / dl));
            long best = jc;
            for (long j = jc - r; j <= jc + r; ++j) {
                if (j >= 0 && j < static_cast<long>(npts) && curve[static_cast<std::size_t>(j)] > curve[static_cast<std::size_t>(best)]) best = j;
            }
            const double center = -1.0 + static_cast<double>(best) * dl;
            const long half = std::lround(2.2 * s0 / dl);
            double lo_val = std::numeric_limits<double>::infinity(), hi_val = -lo_val;
            ceres::Problem problem;
            for (long j = best - half; j <= best + half; ++j) {
                if (j < 0 || j >= static_cast<long>(npts)) continue;
                const double y = curve[static_cast<std::size_t>(j)];
                lo_val = std::min(lo_val, y);
                hi_val = std::max(hi_val, y);
            }
            double p[8] = {center, s0, 0.35 * s0, 0.0, 0.0, 0.0, lo_val, 0.0};
            const double a0 = hi_val - lo_val;
            p[3] = p[4] = p[5] = 0.7 * a0;
            for (long j = best - half; j <= best + half; ++j) {
                if (j < 0 || j >= static_cast<long>(npts)) continue;
                problem.AddResidualBlock(new ceres::AutoDiffCostFunction<TripletCost, 1, 8>(
                                             new TripletCost{-1.0 + static_cast<double>(j) * dl, curve[static_cast<std::size_t>(j)]}),
                                         nullptr, p);
            }
            problem.SetParameterLowerBound(p, 1, 0.3 * s0);
            problem.SetParameterUpperBound(p, 1, 3.0 * s0);
            problem.SetParameterLowerBound(p, 2, 0.02 * s0);
            problem.SetParameterUpperBound(p, 2, 3.0 * s0);
            ceres::Solver::Options so;
            so.linear_solver_type = ceres::DENSE_QR;
            so.max_num_iterations = 200;
            so.logging_type = ceres::SILENT;
            ceres::Solver::Summary summary;
            ceres::Solve(so, &problem, &summary);
            const bool ok = summary.IsSolutionUsable() && p[2] < p[1] && p[3] > 0.0 && p[4] > 0.0 && p[5] > 0.0;
            if (ok) {
                sum += p[1];
                ++used;
            }
        }
        if (used == 0) {
            out.warnings.push_back("orientation " + std::to_string(o + 1) + ": hyperfine triplet not resolved");
            continue;
        }
        out.resolved[o] = true;
        out.spacing[o] = sum / used;
        out.projection_t[static_cast<Eigen::Index>(o)] = pc.hyperfine_field() / out.spacing[o];
    }
    if (out.resolved[0] && out.resolved[1] && out.resolved[2]) {
        Vec3 sorted = out.projection_t;
        std::sort(sorted.data(), sorted.data() + 3, std::greater<double>());
        out.b0_mag = magnitude_from_three(sorted);
        out.unit_projections = out.projection_t / out.b0_mag;
    } else {
        out.warnings.push_back("fewer than three orientations resolved; bias magnitude unavailable");
    }
    for (int i = 0; i < 3; ++i) {
        out.a_axis(i, i) = (cfg.beta[static_cast<std::size_t>(i)] < 0.0 ? -1.0 : 1.0) * out.projection_t[i];
    }
    return out;
}

Vec3 reconstruct(const TauVector& tau, const CalibrationResult& cal) {
    if (!tau.all_valid()) throw Error("reconstruct: tau has invalid components");
    return (Mat3::Identity() + cal.c_matrix) * cal.a_matrix * tau.tau;
}

namespace {

void put_row(std::ostream& os, const std::string& key, const Eigen::Ref<const Eigen::RowVector3d>& r) {
    os << key << " = " << r[0] << ", " << r[1] << ", " << r[2] << '\n';
}

void put_mat(std::ostream& os, const std::string& key, const Mat3& m) {
    for (int i = 0; i < 3; ++i) put_row(os, key + "." + std::to_string(i), m.row(i));
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::string s = v;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    double x;
    while (is >> x) out.push_back(x);
    return out;
}

}  // namespace

void write_calibration(const CalibrationResult& cal, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("calibration: cannot open for writing: " + path);
    os << "# nvmag calibration v1\n" << std::setprecision(17);
    os << "b0_amplitude_t = " << cal.b0_mag << '\n';
    os << "b0_rms_t = " << cal.b0_rms() << '\n';
    os << "b0_hyperfine_amplitude_t = " << cal.b0_hyperfine << '\n';
    os << "residual = " << cal.residual << '\n';
    os << "c_flagged = " << (cal.c_flagged ? 1 : 0) << '\n';
    os << "projections_descending = " << (cal.projections_descending ? 1 : 0) << '\n';
    put_row(os, "bias_dir_lab", cal.bias_dir_lab.transpose());
    put_row(os, "column_signs", cal.column_signs.transpose());
    put_row(os, "projections", cal.projections.transpose());
    put_mat(os, "u", cal.u);
    put_mat(os, "a", cal.a_matrix);
    put_mat(os, "c", cal.c_matrix);
    put_mat(os, "a_axis", cal.a_axis);
    if (!os) throw Error("calibration: write failed: " + path);
}

CalibrationResult read_calibration(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("calibration: cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto scalar = [&](const std::string& k) {
        const auto it = kv.find(k);
        if (it == kv.end()) throw Error("calibration: missing key " + k + " in " + path);
        const auto v = parse_list(it->second);
        if (v.size() != 1) throw Error("calibration: key " + k + " must hold one number");
        return v[0];
    };
    auto vec = [&](const std::string& k) {
        const auto it = kv.find(k);
        if (it == kv.end()) throw Error("calibration: missing key " + k + " in " + path);
        const auto v = parse_list(it->second);
        if (v.size() != 3) throw Error("calibration: key " + k + " must hold three numbers");
        return Vec3(v[0], v[1], v[2]);
    };
    auto mat = [&](const std::string& k) {
        Mat3 m;
        for (int i = 0; i < 3; ++i) m.row(i) = vec(k + "." + std::to_string(i)).transpose();
        return m;
    };
    CalibrationResult cal;
    cal.b0_mag = scalar("b0_amplitude_t");
    cal.b0_hyperfine = scalar("b0_hyperfine_amplitude_t");
    cal.residual = scalar("residual");
    cal.c_flagged = scalar("c_flagged") != 0.0;
    cal.projections_descending = scalar("projections_descending") != 0.0;
    cal.bias_dir_lab = vec("bias_dir_lab");
    cal.column_signs = vec("column_signs");
    cal.projections = vec("projections");
    cal.u = mat("u");
    cal.a_matrix = mat("a");
    cal.c_matrix = mat("c");
    cal.a_axis = mat("a_axis");
    if (!is_orthogonal(cal.u, 1e-9)) throw Error("calibration: u is not orthogonal in " + path);
    return cal;
}

}  // namespace nvmag
