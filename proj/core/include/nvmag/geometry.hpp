#pragma once

#include <array>

#include <Eigen/Core>

#include "nvmag/types.hpp"

namespace nvmag {

/// The four NV symmetry axes of a diamond crystal expressed in some
/// orthogonal frame.
///
/// Any three axes span R^3; the fourth satisfies n4 = N3 * a_vec with every
/// entry of a_vec equal to +1 or -1. Axes are stored explicitly so a rotated
/// basis round-trips exactly.
class NvBasis {
public:
    NvBasis(const std::array<Vec3, 4>& axes, const Vec3& a_vec);

    const Vec3& axis(int i) const { return axes_[static_cast<std::size_t>(i)]; }
    const std::array<Vec3, 4>& axes() const { return axes_; }
    const Vec3& a_vec() const { return a_vec_; }

    /// First three axes as columns.
    Mat3 n3() const;
    /// All four axes as columns.
    Eigen::Matrix<double, 3, 4> n4() const;

private:
    std::array<Vec3, 4> axes_;
    Vec3 a_vec_;
};

/// (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1), each over sqrt(3).
NvBasis canonical_basis();

/// Applies an orthogonal change of frame: every axis n becomes U n.
/// Throws if U^T U deviates from I by more than 1e-10.
NvBasis rotate_basis(const NvBasis& basis, const Mat3& u);

/// Projections of b onto the four axes, N4^T b.
Vec4 project(const Vec3& b, const NvBasis& basis);

/// Field magnitude from three projections when the unmeasured fourth axis
/// carries the smallest projection. Only absolute values enter, so signs of
/// the inputs are irrelevant; the absolute values must be in descending
/// order. At an exact tie between the third and fourth projection the result
/// is still continuous, but which axis went unmeasured is ambiguous.
double magnitude_from_three(const Vec3& p_abs);

/// Magnitude from all four projections, sqrt(3/4) |p4|.
double magnitude_from_four(const Vec4& p);

bool is_orthogonal(const Mat3& u, double tol = 1e-10);

}  // namespace nvmag
