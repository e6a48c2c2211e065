#include "nvmag/cavity.hpp"

#include <cmath>
#include <sstream>

#include "nvmag/constants.hpp"
#include "nvmag/error.hpp"

namespace nvmag {

void CavityParams::validate() const {
    if (!(kappa_c0 > 0.0) || !(kappa_c1 > 0.0) || !(omega_c > 0.0) || !(omega_d > 0.0)) {
        throw Error("CavityParams: all rates must be strictly positive");
    }
}

void SpinTransitionParams::validate() const {
    if (g_s < 0.0 || kappa_s < 0.0 || kappa_op < 0.0) {
        throw Error("SpinTransitionParams: g_s, kappa_s and kappa_op must be non-negative");
    }
    if (n_perp < 0.0 || n_perp > 1.0) {
        throw Error("SpinTransitionParams: n_perp must lie in [0, 1]");
    }
    if (n_cav < 0.0 || n_spins < 0.0) {
        throw Error("SpinTransitionParams: n_cav and n_spins must be non-negative");
    }
}

void SpinCavityParams::validate() const {
    cavity.validate();
    for (const auto& t : transitions) t.validate();
    double wsum = 0.0;
    for (double w : hyperfine_weights) {
        if (w < 0.0) throw Error("SpinCavityParams: hyperfine weights must be non-negative");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw Error("SpinCavityParams: hyperfine weights must sum to 1");
    }
    if (self_consistent_ncav && !(photons_per_unit_amplitude >= 0.0)) {
        throw Error("SpinCavityParams: photons_per_unit_amplitude must be non-negative");
    }
}

double single_spin_coupling(double gamma, double n_perp, double omega_c, double v_cav) {
    if (!(v_cav > 0.0)) throw Error("single_spin_coupling: cavity volume must be positive");
    return 0.5 * gamma * n_perp * std::sqrt(kHbar * omega_c * kMu0 / v_cav);
}

cplx spin_term(const SpinTransitionParams& p, double omega_d, double omega_s) {
    if (!(p.kappa_s > 0.0)) throw Error("spin_term: kappa_s must be positive");
    if (p.kappa_op == 0.0 && p.n_cav > 0.0) {
        throw Error("spin_term: saturation undefined for kappa_op = 0 with n_cav > 0");
    }
    const double g2 = p.g_s * p.g_s;
    if (g2 == 0.0) return {0.0, 0.0};
    const cplx lam{0.5 * p.kappa_s, omega_d - omega_s};
    const double sat = p.n_cav > 0.0 ? g2 * p.n_cav * p.kappa_s / (2.0 * p.kappa_op) : 0.0;
    return g2 * p.n_spins / (lam + sat / std::conj(lam));
}

cplx reflection_coefficient(const CavityParams& c, cplx pi_sum) {
    const cplx denom = cplx{0.5 * c.kappa_c(), c.omega_d - c.omega_c} + pi_sum;
    return -1.0 + c.kappa_c1 / denom;
}

cplx total_spin_term(const SpinCavityParams& params, std::span<const double> omega_s) {
    if (omega_s.size() != static_cast<std::size_t>(kBranches)) {
        throw Error("total_spin_term: expected one frequency per branch");
    }
    cplx sum{0.0, 0.0};
    for (int tr = 0; tr < kTransitions; ++tr) {
        for (int line = 0; line < kHyperfineLines; ++line) {
            SpinTransitionParams p = params.transitions[static_cast<std::size_t>(tr)];
            p.n_spins *= params.hyperfine_weights[static_cast<std::size_t>(line)];
            sum += spin_term(p, params.cavity.omega_d,
                             omega_s[static_cast<std::size_t>(tr * kHyperfineLines + line)]);
        }
    }
    return sum;
}

}  // namespace nvmag
