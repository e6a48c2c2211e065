#pragma once

#include "nvmag/types.hpp"

namespace nvmag {

inline constexpr double kHbar = 1.054571817e-34;  // J s
inline constexpr double kMu0 = 1.25663706212e-6;  // T m / A

// NV ground-state constants, all angular (rad/s or rad/s/T).
struct PhysicalConstants {
    double d_zfs = kTwoPi * 2.87e9;
    double gamma_e = kTwoPi * 28e9;
    double a_hf = kTwoPi * 2.22e6;

    // Field equivalent of the 14N hyperfine splitting.
    double hyperfine_field() const { return a_hf / gamma_e; }
};

}  // namespace nvmag
