#include "nvmag/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

// Exponential time-differencing coefficients for y' = L y + N with z = L h.
struct EtdCoeffs {
    cplx e;   // exp(z)
    cplx e2;  // exp(z/2)
    cplx q;   // L^-1 (exp(z/2) - 1)
    cplx f1, f2, f3;
};

void phi_series(cplx z, cplx& phi1, cplx& phi2, cplx& phi3) {
    // phi_k(z) = sum_j z^j / (j + k)!
    cplx term1{1.0, 0.0}, term2{0.5, 0.0}, term3{1.0 / 6.0, 0.0};
    phi1 = term1;
    phi2 = term2;
    phi3 = term3;
    for (int j = 1; j < 24; ++j) {
        term1 *= z / static_cast<double>(j + 1);
        term2 *= z / static_cast<double>(j + 2);
        term3 *= z / static_cast<double>(j + 3);
        phi1 += term1;
        phi2 += term2;
        phi3 += term3;
    }
}

EtdCoeffs etd_coeffs(cplx z, double h, cplx e2) {
    EtdCoeffs c;
    c.e2 = e2;
    c.e = c.e2 * c.e2;
    cplx phi1, phi2, phi3, half1, unused2, unused3;
    if (std::norm(z) < 1.0) {
        phi_series(z, phi1, phi2, phi3);
        phi_series(0.5 * z, half1, unused2, unused3);
    } else {
        const cplx zi = std::conj(z) / std::norm(z);
        phi1 = (c.e - 1.0) * zi;
        phi2 = (phi1 - 1.0) * zi;
        phi3 = (phi2 - 0.5) * zi;
        half1 = (c.e2 - 1.0) * (2.0 * zi);
    }
    c.q = 0.5 * h * half1;
    c.f1 = h * (phi1 - 3.0 * phi2 + 4.0 * phi3);
    c.f2 = h * (phi2 - 2.0 * phi3);
    c.f3 = h * (-phi2 + 4.0 * phi3);
    return c;
}

EtdCoeffs etd_coeffs(cplx z, double h) { return etd_coeffs(z, h, std::exp(0.5 * z)); }

struct Vars {
    cplx a;
    std::array<cplx, kBranches> s;
    std::array<double, kBranches> p;
};

}  // namespace

SampledDrive::SampledDrive(std::vector<cplx> samples, double sample_rate, double t0)
    : samples_(std::move(samples)), sample_rate_(sample_rate), t0_(t0) {
    if (samples_.empty()) throw Error("SampledDrive: no samples");
    if (!(sample_rate_ > 0.0)) throw Error("SampledDrive: sample rate must be positive");
}

cplx SampledDrive::at(double t) const {
    const double x = (t - t0_) * sample_rate_;
    if (x <= 0.0) return samples_.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= samples_.size()) return samples_.back();
    const double f = x - static_cast<double>(i);
    return samples_[i] + f * (samples_[i + 1] - samples_[i]);
}

SampledFrequencies::SampledFrequencies(std::vector<std::vector<double>> traces, double sample_rate,
                                       double t0)
    : traces_(std::move(traces)), sample_rate_(sample_rate), t0_(t0) {
    if (traces_.size() != static_cast<std::size_t>(kBranches)) {
        throw Error("SampledFrequencies: expected one trace per branch");
    }
    length_ = traces_.front().size();
    for (const auto& tr : traces_) {
        if (tr.size() != length_) throw Error("SampledFrequencies: trace lengths differ");
    }
    if (length_ == 0) throw Error("SampledFrequencies: empty traces");
}

void SampledFrequencies::at(double t, std::span<double> omega_s) const {
    const double x = std::max(0.0, (t - t0_) * sample_rate_);
    auto i = static_cast<std::size_t>(x);
    double f = x - static_cast<double>(i);
    if (i + 1 >= length_) {
        i = length_ - 1;
        f = 0.0;
    }
    for (std::size_t k = 0; k < traces_.size(); ++k) {
        const auto& tr = traces_[k];
        omega_s[k] = f == 0.0 ? tr[i] : tr[i] + f * (tr[i + 1] - tr[i]);
    }
}

ConstantFrequencies::ConstantFrequencies(std::vector<double> omega_s) : omega_s_(std::move(omega_s)) {
    if (omega_s_.size() != static_cast<std::size_t>(kBranches)) {
        throw Error("ConstantFrequencies: expected one frequency per branch");
    }
}

void ConstantFrequencies::at(double, std::span<double> omega_s) const {
    std::copy(omega_s_.begin(), omega_s_.end(), omega_s.begin());
}

Simulator::Simulator(const SpinCavityParams& params, SimConfig config, SimState initial)
    : params_(params), config_(config), state_(std::move(initial)) {
    params_.validate();
    if (!(config_.sample_rate > 0.0) || config_.substeps < 1) {
        throw Error("Simulator: sample rate must be positive and substeps >= 1");
    }
    if (state_.x2.size() != static_cast<std::size_t>(kBranches) ||
        state_.x3.size() != static_cast<std::size_t>(kBranches)) {
        throw Error("Simulator: initial state has wrong branch count");
    }
    const double h = 1.0 / (config_.sample_rate * config_.substeps);
    // Linear decay terms are integrated exactly; only the coupling and the
    // cavity rate have to be resolved by the step.
    double fastest = params_.cavity.kappa_c();
    double coupling2 = 0.0;
    for (int tr = 0; tr < kTransitions; ++tr) {
        const auto& p = params_.transitions[static_cast<std::size_t>(tr)];
        coupling2 = std::max(coupling2, p.g_s * p.g_s * p.n_spins);
        if (p.kappa_op == 0.0 && (p.n_cav > 0.0 || params_.self_consistent_ncav) && p.g_s > 0.0) {
            throw Error("Simulator: kappa_op = 0 leaves depolarization without recovery");
        }
        for (int line = 0; line < kHyperfineLines; ++line) {
            const auto k = static_cast<std::size_t>(tr * kHyperfineLines + line);
            g2_[k] = p.g_s * p.g_s;
            n_branch_[k] = p.n_spins * params_.hyperfine_weights[static_cast<std::size_t>(line)];
            kappa_s_[k] = p.kappa_s;
            kappa_op_[k] = p.kappa_op;
            n_cav_[k] = p.n_cav;
        }
    }
    fastest = std::max(fastest, std::sqrt(coupling2));
    if (h * fastest >= 1.0) {
        std::ostringstream os;
        os << "Simulator: step " << h << " s does not resolve the fastest rate " << fastest
           << " rad/s (need dt * rate < 1)";
        throw Error(os.str());
    }
}

namespace {

constexpr int B = kBranches;
using Row = std::array<double, B>;

// Complex per-branch vector stored as separate real and imaginary rows so the
// branch loops vectorize.
struct CRow {
    alignas(32) Row re{};
    alignas(32) Row im{};
};

struct Stage {
    cplx a;
    CRow s;
    alignas(32) Row p{};
};

// Per-branch quantities evaluated at one stage time.
struct StageTable {
    CRow inv_lam;           // 1 / (kappa_s/2 + i (omega_d - omega_s))
    alignas(32) Row lor{};  // g^2 kappa_s / (2 |lambda|^2); times n_cav gives the depolarization rate
};

struct BranchCoeffs {
    CRow e, e2, q, f1, f2, f3;
};

inline void cmul(double ar, double ai, double br, double bi, double& r, double& i) {
    r = ar * br - ai * bi;
    i = ar * bi + ai * br;
}

}  // namespace

void Simulator::run(const DriveSource& drive, const SpinFrequencySource& freqs, std::span<cplx> out) {
    const int nsub = config_.substeps;
    const double dt = 1.0 / config_.sample_rate;
    const double h = dt / nsub;
    const auto& cav = params_.cavity;
    const double omega_d = cav.omega_d;
    const bool sc = params_.self_consistent_ncav;
    const double eta = params_.photons_per_unit_amplitude;
    const double adiabatic = config_.adiabatic_detuning;
    const double kappa_c1 = cav.kappa_c1;

    const cplx la{-0.5 * cav.kappa_c(), -(omega_d - cav.omega_c)};
    const EtdCoeffs ca = etd_coeffs(la * h, h);

    Row half_decay{};
    for (int k = 0; k < B; ++k) half_decay[k] = std::exp(-0.25 * kappa_s_[k] * h);

    auto fill_stage = [&](const Row& w, StageTable& st) {
        for (int k = 0; k < B; ++k) {
            const double det = omega_d - w[k];
            const double hk = 0.5 * kappa_s_[k];
            const double inv = 1.0 / (hk * hk + det * det);
            st.inv_lam.re[k] = hk * inv;
            st.inv_lam.im[k] = -det * inv;
            st.lor[k] = g2_[k] * hk * inv;
        }
    };

    Stage u;
    u.a = state_.x1;
    for (int k = 0; k < B; ++k) {
        u.s.re[k] = state_.x2[static_cast<std::size_t>(k)].real();
        u.s.im[k] = state_.x2[static_cast<std::size_t>(k)].imag();
        u.p[k] = state_.x3[static_cast<std::size_t>(k)];
    }

    Row w0{}, wm{}, w1{};
    StageTable st0, stm, st1;
    BranchCoeffs cs;
    alignas(32) Row active{};  // 1 integrated, 0 adiabatic
    Stage nu, na, nb, nc, sa, sb, sc_;

    // Right-hand side without the exactly integrated linear parts. Adiabatic
    // branches carry their instantaneous steady-state coherence.
    auto eval = [&](Stage& v, cplx x, const StageTable& st, Stage& d) {
        const double ar = v.a.real(), ai = v.a.imag();
        const double n_sc = eta * (ar * ar + ai * ai);
        double fr = 0.0, fi = 0.0;
        for (int k = 0; k < B; ++k) {
            const double pol = n_branch_[k] - v.p[k];
            double adr, adi;
            cmul(pol * ar, pol * ai, st.inv_lam.re[k], st.inv_lam.im[k], adr, adi);
            const double m = active[k];
            v.s.re[k] = m * v.s.re[k] + (1.0 - m) * adr;
            v.s.im[k] = m * v.s.im[k] + (1.0 - m) * adi;
            d.s.re[k] = pol * ar;
            d.s.im[k] = pol * ai;
            fr += g2_[k] * v.s.re[k];
            fi += g2_[k] * v.s.im[k];
            const double n_cav = sc ? n_sc : n_cav_[k];
            d.p[k] = st.lor[k] * n_cav * pol - kappa_op_[k] * v.p[k];
        }
        d.a = kappa_c1 * x - cplx{fr, fi};
    };

    // dst = e2 * src + q * (c1 * n1 + c2 * n2) on the coherences.
    auto advance = [&](const CRow& src, const Stage& n1, double c1, const Stage* n2, double c2, CRow& dst) {
        for (int k = 0; k < B; ++k) {
            double nr = c1 * n1.s.re[k], ni = c1 * n1.s.im[k];
            if (n2) {
                nr += c2 * n2->s.re[k];
                ni += c2 * n2->s.im[k];
            }
            double r1, i1, r2, i2;
            cmul(cs.e2.re[k], cs.e2.im[k], src.re[k], src.im[k], r1, i1);
            cmul(cs.q.re[k], cs.q.im[k], nr, ni, r2, i2);
            dst.re[k] = r1 + r2;
            dst.im[k] = i1 + i2;
        }
    };

    freqs.at(t_, w0);
    fill_stage(w0, st0);
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double t_sample = t_;
        out[n] = u.a - drive.at(t_sample);
        if (!std::isfinite(out[n].real()) || !std::isfinite(out[n].imag())) {
            std::ostringstream os;
            os << "Simulator: non-finite state at t=" << t_sample << " s (sample " << n_done_ << ")";
            throw Error(os.str());
        }
        for (int sub = 0; sub < nsub; ++sub) {
            const double t = t_sample + sub * h;
            freqs.at(t + 0.5 * h, wm);
            freqs.at(t + h, w1);
            fill_stage(wm, stm);
            fill_stage(w1, st1);
            for (int k = 0; k < B; ++k) {
                const double det = omega_d - wm[k];
                const bool on = !(adiabatic > 0.0 && std::abs(det) > adiabatic * kappa_s_[k]);
                active[k] = on ? 1.0 : 0.0;
                if (!on) continue;
                const double ph = -0.5 * det * h;
                const cplx e2 = half_decay[k] * cplx{std::cos(ph), std::sin(ph)};
                const EtdCoeffs c = etd_coeffs(cplx{-0.5 * kappa_s_[k], -det} * h, h, e2);
                cs.e.re[k] = c.e.real(), cs.e.im[k] = c.e.imag();
                cs.e2.re[k] = c.e2.real(), cs.e2.im[k] = c.e2.imag();
                cs.q.re[k] = c.q.real(), cs.q.im[k] = c.q.imag();
                cs.f1.re[k] = c.f1.real(), cs.f1.im[k] = c.f1.imag();
                cs.f2.re[k] = c.f2.real(), cs.f2.im[k] = c.f2.imag();
                cs.f3.re[k] = c.f3.real(), cs.f3.im[k] = c.f3.imag();
            }
            const cplx x0 = drive.at(t);
            const cplx xm = drive.at(t + 0.5 * h);
            const cplx x1 = drive.at(t + h);
            const double hh = 0.5 * h;

            eval(u, x0, st0, nu);
            sa.a = ca.e2 * u.a + ca.q * nu.a;
            advance(u.s, nu, 1.0, nullptr, 0.0, sa.s);
            for (int k = 0; k < B; ++k) sa.p[k] = u.p[k] + hh * nu.p[k];

            eval(sa, xm, stm, na);
            sb.a = ca.e2 * u.a + ca.q * na.a;
            advance(u.s, na, 1.0, nullptr, 0.0, sb.s);
            for (int k = 0; k < B; ++k) sb.p[k] = u.p[k] + hh * na.p[k];

            eval(sb, xm, stm, nb);
            sc_.a = ca.e2 * sa.a + ca.q * (2.0 * nb.a - nu.a);
            advance(sa.s, nb, 2.0, &nu, -1.0, sc_.s);
            for (int k = 0; k < B; ++k) sc_.p[k] = sa.p[k] + hh * (2.0 * nb.p[k] - nu.p[k]);

            eval(sc_, x1, st1, nc);
            u.a = ca.e * u.a + ca.f1 * nu.a + 2.0 * ca.f2 * (na.a + nb.a) + ca.f3 * nc.a;
            const double ar = u.a.real(), ai = u.a.imag();
            for (int k = 0; k < B; ++k) {
                const double p = u.p[k] + (h / 6.0) * (nu.p[k] + 2.0 * (na.p[k] + nb.p[k]) + nc.p[k]);
                u.p[k] = std::clamp(p, 0.0, n_branch_[k]);
                double r, i, acc_r, acc_i;
                cmul(cs.e.re[k], cs.e.im[k], u.s.re[k], u.s.im[k], acc_r, acc_i);
                cmul(cs.f1.re[k], cs.f1.im[k], nu.s.re[k], nu.s.im[k], r, i);
                acc_r += r, acc_i += i;
                cmul(cs.f2.re[k], cs.f2.im[k], 2.0 * (na.s.re[k] + nb.s.re[k]), 2.0 * (na.s.im[k] + nb.s.im[k]), r, i);
                acc_r += r, acc_i += i;
                cmul(cs.f3.re[k], cs.f3.im[k], nc.s.re[k], nc.s.im[k], r, i);
                acc_r += r, acc_i += i;
                const double pol = n_branch_[k] - u.p[k];
                double adr, adi;
                cmul(pol * ar, pol * ai, st1.inv_lam.re[k], st1.inv_lam.im[k], adr, adi);
                const double m = active[k];
                u.s.re[k] = m * acc_r + (1.0 - m) * adr;
                u.s.im[k] = m * acc_i + (1.0 - m) * adi;
            }
            w0 = w1;
            st0 = st1;
        }
        ++n_done_;
        t_ = static_cast<double>(n_done_) * dt;
    }

    state_.x1 = u.a;
    for (int k = 0; k < B; ++k) {
        state_.x2[static_cast<std::size_t>(k)] = {u.s.re[k], u.s.im[k]};
        state_.x3[static_cast<std::size_t>(k)] = u.p[k];
    }
}

}  // namespace nvmag
