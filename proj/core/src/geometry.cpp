#include "nvmag/geometry.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "nvmag/error.hpp"

namespace nvmag {

NvBasis::NvBasis(const std::array<Vec3, 4>& axes, const Vec3& a_vec) : axes_(axes), a_vec_(a_vec) {
    for (double a : a_vec_) {
        if (a != 1.0 && a != -1.0) {
            throw Error("NvBasis: a_vec entries must be exactly +1 or -1");
        }
    }
}

Mat3 NvBasis::n3() const {
    Mat3 m;
    for (int i = 0; i < 3; ++i) m.col(i) = axes_[static_cast<std::size_t>(i)];
    return m;
}

Eigen::Matrix<double, 3, 4> NvBasis::n4() const {
    Eigen::Matrix<double, 3, 4> m;
    for (int i = 0; i < 4; ++i) m.col(i) = axes_[static_cast<std::size_t>(i)];
    return m;
}

NvBasis canonical_basis() {
    const double s = 1.0 / std::sqrt(3.0);
    std::array<Vec3, 4> axes = {
        Vec3(1, 1, 1) * s,
        Vec3(1, -1, -1) * s,
        Vec3(-1, 1, -1) * s,
        Vec3(-1, -1, 1) * s,
    };
    // n1 + n2 + n3 = -n4 for this choice; solve anyway and snap to +-1.
    Mat3 n3;
    for (int i = 0; i < 3; ++i) n3.col(i) = axes[static_cast<std::size_t>(i)];
    Vec3 a = n3.fullPivLu().solve(axes[3]);
    for (double& v : a) v = v > 0 ? 1.0 : -1.0;
    return NvBasis(axes, a);
}

bool is_orthogonal(const Mat3& u, double tol) {
    return ((u.transpose() * u) - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol;
}

NvBasis rotate_basis(const NvBasis& basis, const Mat3& u) {
    if (!is_orthogonal(u)) {
        throw Error("rotate_basis: matrix is not orthogonal to 1e-10");
    }
    std::array<Vec3, 4> axes;
    for (int i = 0; i < 4; ++i) axes[static_cast<std::size_t>(i)] = u * basis.axis(i);
    return NvBasis(axes, basis.a_vec());
}

Vec4 project(const Vec3& b, const NvBasis& basis) {
    return basis.n4().transpose() * b;
}

double magnitude_from_three(const Vec3& p_abs) {
    const double p1 = std::abs(p_abs[0]);
    const double p2 = std::abs(p_abs[1]);
    const double p3 = std::abs(p_abs[2]);
    if (p1 < p2 || p2 < p3) {
        std::ostringstream os;
        os << "magnitude_from_three: projections not in descending order (" << p1 << ", " << p2
           << ", " << p3 << ")";
        throw Error(os.str());
    }
    const double p4 = p1 - p2 - p3;
    return std::sqrt(0.75 * (p1 * p1 + p2 * p2 + p3 * p3 + p4 * p4));
}

double magnitude_from_four(const Vec4& p) {
    return std::sqrt(0.75 * p.squaredNorm());
}

}  // namespace nvmag
