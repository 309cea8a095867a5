#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace isoopt {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;  // measured values and the bound they were held to
};

// Each check draws its own random instances from `seed`.

/// | ‖W_U(XA, GB)‖ − ‖W_U(X, G)‖ | / ‖W_U(X, G)‖ ≤ 1e-6 for invertible A, B.
PropertyResult check_norm_invariance(std::size_t trials = 100, std::uint64_t seed = 11);
/// W_U(XQ, GU) = Qᵀ W_U(X, G) U within 1e-8 for orthogonal Q, U.
PropertyResult check_orthogonal_equivariance(std::size_t trials = 100, std::uint64_t seed = 12);
/// Median ‖update(4b)‖/‖update(b)‖ on independent x, g: Iso in [0.40, 0.60],
/// Adam in [0.85, 1.15].
PropertyResult check_zero_gradient_scaling(std::size_t seeds = 50, std::size_t batch = 256,
                                           std::size_t dim = 16, std::uint64_t seed = 13);
/// 500 Adam steps on one repeated batch reach sgn(gradient) within 1e-3.
PropertyResult check_sign_descent_limit(std::uint64_t seed = 14);
/// Simultaneously diagonalizable SPD X, G: Shampoo and Iso both give I
/// (unridged, so the identity is exact up to rounding).
PropertyResult check_shampoo_iso_identity(std::size_t trials = 20, std::uint64_t seed = 15);
/// Newton–Schulz against the eigendecomposition on SPD matrices with
/// condition ≤ 1e4, within 1e-6 and without falling back.
PropertyResult check_inv_sqrt_agreement(std::size_t trials = 100, std::uint64_t seed = 16);
/// Shampoo's instantaneous update equals polar_project of the gradient.
PropertyResult check_shampoo_polar_agreement(std::size_t trials = 20, std::uint64_t seed = 17);
/// d1 = 1 − β₁ᵗ and d2 = 1 − β₂ᵗ along an IsoAdam run.
PropertyResult check_isoadam_denominators(std::uint64_t seed = 18);

std::vector<PropertyResult> run_all_checks();

}  // namespace isoopt
