#include "isoopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace isoopt {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxSweeps = 60;

void require_square(const DenseMatrix& m, const char* what) {
    if (!m.is_square())
        throw ContractError(std::string(what) + ": expected a square matrix, got " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

// Applies the rotation that zeroes a(p, q). `a` is full symmetric storage
// and `vt` holds eigenvectors as rows. Off-block entries of rows p and q are
// rotated in place and mirrored into columns p and q.
void jacobi_rotate(DenseMatrix& a, DenseMatrix& vt, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows();
    const double apq = a(p, q);
    const double app = a(p, p);
    const double aqq = a(q, q);
    const double tau = (aqq - app) / (2.0 * apq);
    const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
    const double c = 1.0 / std::sqrt(1.0 + t * t);
    const double s = t * c;

    double* __restrict rp = a.row(p).data();
    double* __restrict rq = a.row(q).data();
    for (std::size_t k = 0; k < n; ++k) {
        const double x = rp[k];
        const double y = rq[k];
        rp[k] = c * x - s * y;
        rq[k] = s * x + c * y;
    }
    rp[p] = app - t * apq;
    rq[q] = aqq + t * apq;
    rp[q] = 0.0;
    rq[p] = 0.0;
    double* d = a.data().data();
    for (std::size_t k = 0; k < n; ++k) {
        d[k * n + p] = rp[k];
        d[k * n + q] = rq[k];
    }

    double* __restrict vp = vt.row(p).data();
    double* __restrict vq = vt.row(q).data();
    for (std::size_t k = 0; k < n; ++k) {
        const double x = vp[k];
        const double y = vq[k];
        vp[k] = c * x - s * y;
        vq[k] = s * x + c * y;
    }
}

}  // namespace

SpdMatrix::SpdMatrix(DenseMatrix mat, double ridge_applied)
    : mat_(std::move(mat)), ridge_applied_(ridge_applied) {
    require_square(mat_, "SpdMatrix");
    if (!mat_.is_finite()) throw ContractError("SpdMatrix: non-finite entry");
    if (!is_symmetric(mat_, symmetry_tolerance(mat_)))
        throw ContractError("SpdMatrix: matrix is not symmetric");
    if (ridge_applied_ < 0.0) throw ContractError("SpdMatrix: negative ridge");
}

Eigendecomposition sym_eig(const SpdMatrix& s, const DenseMatrix* warm_basis) {
    const std::size_t n = s.dim();
    DenseMatrix a;
    DenseMatrix vt;
    if (warm_basis != nullptr) {
        if (warm_basis->rows() != n || warm_basis->cols() != n)
            throw ContractError("sym_eig: warm basis has the wrong shape");
        a = matmul_tn(*warm_basis, matmul(s.mat(), *warm_basis));
        symmetrize(a);
        vt = transpose(*warm_basis);
    } else {
        a = s.mat();
        symmetrize(a);
        vt = DenseMatrix::identity(n);
    }

    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        std::size_t rotations = 0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = std::abs(a(p, q));
                if (apq < std::numeric_limits<double>::min()) continue;
                if (apq <= kEps * std::sqrt(std::abs(a(p, p)) * std::abs(a(q, q)))) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                jacobi_rotate(a, vt, p, q);
                ++rotations;
            }
        }
        if (rotations == 0) break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    Eigendecomposition out;
    out.sweeps = sweep;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.eigenvalues[k] = a(src, src);
        const auto v = vt.row(src);
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = v[r];
    }
    return out;
}

DenseMatrix sym_pow(const Eigendecomposition& eig, double p) {
    const std::size_t n = eig.eigenvalues.size();
    if (n > 0 && !(eig.eigenvalues.front() > 0.0)) {
        throw SingularityError("sym_pow: eigenvalue " + std::to_string(eig.eigenvalues.front()) +
                                   " is not positive",
                               eig.eigenvalues.front());
    }
    DenseMatrix scaled = eig.eigenvectors;
    for (std::size_t k = 0; k < n; ++k) {
        const double f = std::pow(eig.eigenvalues[k], p);
        for (std::size_t r = 0; r < n; ++r) scaled(r, k) *= f;
    }
    DenseMatrix out = matmul_nt(scaled, eig.eigenvectors);
    symmetrize(out);
    return out;
}

DenseMatrix sym_pow(const SpdMatrix& s, double p) { return sym_pow(sym_eig(s), p); }

SpdMatrix ridge(const DenseMatrix& s, double eps_rel, double eps_abs) {
    require_square(s, "ridge");
    const std::size_t n = s.rows();
    const double lambda = n == 0 ? eps_abs : eps_rel * s.trace() / static_cast<double>(n) + eps_abs;
    DenseMatrix out = s;
    for (std::size_t i = 0; i < n; ++i) out(i, i) += lambda;
    return SpdMatrix(std::move(out), std::max(lambda, 0.0));
}

InvSqrtResult inv_sqrt_ns(const SpdMatrix& s, int max_iters, double tol) {
    const std::size_t n = s.dim();
    const DenseMatrix eye = DenseMatrix::identity(n);
    const double c = frobenius_norm(s.mat());

    InvSqrtResult result;
    if (c > 0.0 && std::isfinite(c)) {
        DenseMatrix y = s.mat() * (1.0 / c);
        DenseMatrix z = eye;
        double prev = std::numeric_limits<double>::infinity();
        int it = 0;
        for (;;) {
            const DenseMatrix zy = matmul(z, y);
            const double r = frobenius_distance(zy, eye);
            // Stop once the proxy residual is within tolerance or has hit
            // its rounding floor.
            if (r <= 0.1 * tol || (r >= prev && r < 1e-3) || it >= max_iters || !std::isfinite(r))
                break;
            prev = r;
            DenseMatrix t = eye * 3.0;
            t -= zy;
            t *= 0.5;
            y = matmul(y, t);
            z = matmul(t, z);
            ++it;
        }
        z *= 1.0 / std::sqrt(c);
        symmetrize(z);
        result.iterations = it;
        if (z.is_finite()) {
            result.residual = frobenius_distance(matmul(z, matmul(s.mat(), z)), eye);
            result.converged = result.residual <= tol;
        }
        if (result.converged) {
            result.value = std::move(z);
            return result;
        }
    }

    result.value = sym_pow(s, -0.5);
    result.fell_back = true;
    result.residual = frobenius_distance(matmul(result.value, matmul(s.mat(), result.value)), eye);
    return result;
}

DenseMatrix polar_project(const DenseMatrix& b, RidgePolicy ridge_policy) {
    require_square(b, "polar_project");
    const std::size_t n = b.rows();
    const SpdMatrix btb = ridge(gram(b), ridge_policy);
    const Eigendecomposition eig = sym_eig(btb);
    if (n == 0) return b;
    const double lmax = eig.eigenvalues.back();
    const double lmin = eig.eigenvalues.front();
    if (!(lmax > 0.0) || lmin <= static_cast<double>(n) * kEps * lmax) {
        throw SingularityError("polar_project: BᵀB is singular (smallest eigenvalue " +
                                   std::to_string(lmin) + ")",
                               lmin);
    }
    DenseMatrix p = matmul(b, sym_pow(eig, -0.5));
    // Newton–Schulz polish P ← P(3I − PᵀP)/2 keeps the singular vectors and
    // pulls the singular values onto 1.
    const DenseMatrix eye = DenseMatrix::identity(n);
    for (int i = 0; i < 2; ++i) {
        DenseMatrix t = eye * 3.0;
        t -= gram(p);
        t *= 0.5;
        p = matmul(p, t);
    }
    return p;
}

DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

DenseMatrix random_orthogonal(SeededRng& rng, std::size_t n) {
    // Gram–Schmidt with one reorthogonalization pass; the implied R has a
    // positive diagonal, which makes Q Haar-distributed.
    DenseMatrix q = transpose(gaussian_matrix(rng, n, n));  // rows are the columns to orthogonalize
    for (std::size_t k = 0; k < n; ++k) {
        auto qk = q.row(k);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < k; ++j) {
                const auto qj = q.row(j);
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += qj[i] * qk[i];
                for (std::size_t i = 0; i < n; ++i) qk[i] -= dot * qj[i];
            }
        }
        double norm = 0.0;
        for (double v : qk) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : qk) v /= norm;
    }
    return transpose(q);
}

DenseMatrix random_spd(SeededRng& rng, std::size_t n, double condition) {
    if (!(condition >= 1.0)) throw ContractError("random_spd: condition must be >= 1");
    std::vector<double> eigs(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        if (i == 0) u = 0.0;
        if (i == 1) u = 1.0;
        eigs[i] = std::pow(condition, -u);
    }
    const DenseMatrix q = random_orthogonal(rng, n);
    DenseMatrix scaled = q;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n; ++k) scaled(r, k) *= eigs[k];
    DenseMatrix s = matmul_nt(scaled, q);
    symmetrize(s);
    return s;
}

}  // namespace isoopt
