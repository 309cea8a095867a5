#pragma once

#include <cstddef>
#include <vector>

#include "isoopt/matrix.hpp"
#include "isoopt/rng.hpp"

namespace isoopt {

/// Symmetric positive (semi)definite matrix plus the ridge that was added
/// to it. Construction checks squareness and symmetry; definiteness is
/// checked lazily by the fractional-power routines.
class SpdMatrix {
public:
    SpdMatrix() = default;
    explicit SpdMatrix(DenseMatrix mat, double ridge_applied = 0.0);

    const DenseMatrix& mat() const noexcept { return mat_; }
    double ridge_applied() const noexcept { return ridge_applied_; }
    std::size_t dim() const noexcept { return mat_.rows(); }

    /// Symmetry tolerance used at construction: 1e-12 × (1 + max|entry|).
    static double symmetry_tolerance(const DenseMatrix& m) { return 1e-12 * (1.0 + m.max_abs()); }

private:
    DenseMatrix mat_;
    double ridge_applied_ = 0.0;
};

struct Eigendecomposition {
    std::vector<double> eigenvalues;  // ascending
    DenseMatrix eigenvectors;         // column k pairs with eigenvalues[k]
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver. `warm_basis`, when given, must be an
/// orthogonal matrix close to the eigenvectors (e.g. the previous step's);
/// the iteration then starts from basisᵀ S basis and usually needs only a
/// couple of sweeps.
Eigendecomposition sym_eig(const SpdMatrix& s, const DenseMatrix* warm_basis = nullptr);

/// Q diag(λᵖ) Qᵀ from an existing decomposition. Throws SingularityError
/// when an eigenvalue is not strictly positive.
DenseMatrix sym_pow(const Eigendecomposition& eig, double p);
DenseMatrix sym_pow(const SpdMatrix& s, double p);

struct RidgePolicy {
    double eps_rel = 1e-8;
    double eps_abs = 1e-12;
};

/// S + λI with λ = eps_rel · trace(S)/n + eps_abs.
SpdMatrix ridge(const DenseMatrix& s, double eps_rel, double eps_abs);
inline SpdMatrix ridge(const DenseMatrix& s, RidgePolicy policy = {}) {
    return ridge(s, policy.eps_rel, policy.eps_abs);
}

struct InvSqrtResult {
    DenseMatrix value;
    int iterations = 0;
    double residual = 0.0;  // ‖Y S Y − I‖_F of the returned value
    bool converged = false;
    bool fell_back = false;  // true when the eigendecomposition path produced `value`
};

/// Coupled Newton–Schulz iteration for S^{-1/2} on S/‖S‖_F:
///   T = (3I − Z Y)/2,  Y ← Y T,  Z ← T Z,
/// with Y → (S/c)^{1/2}, Z → (S/c)^{-1/2}. Falls back to sym_pow when the
/// residual does not reach `tol` within `max_iters`.
InvSqrtResult inv_sqrt_ns(const SpdMatrix& s, int max_iters = 30, double tol = 1e-9);

/// B (BᵀB)^{-1/2}, the orthogonal matrix nearest to B in Frobenius norm.
/// Throws SingularityError when BᵀB (after `ridge`) is numerically singular.
DenseMatrix polar_project(const DenseMatrix& b, RidgePolicy ridge_policy = {0.0, 0.0});

/// i.i.d. N(0, scale²) entries.
DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
DenseMatrix random_orthogonal(SeededRng& rng, std::size_t n);

/// Q diag(eigs) Qᵀ for a random orthogonal Q and eigenvalues spread
/// log-uniformly over [1/condition, 1].
DenseMatrix random_spd(SeededRng& rng, std::size_t n, double condition);

}  // namespace isoopt
