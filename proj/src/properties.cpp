#include "isoopt/properties.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "isoopt/linalg.hpp"
#include "isoopt/optim.hpp"

namespace isoopt {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::size_t uniform_index(SeededRng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1)) %
                    (hi - lo + 1);
}

// U diag(s) Vᵀ with singular values spread log-uniformly down to 1/condition.
DenseMatrix random_invertible(SeededRng& rng, std::size_t n, double condition) {
    const DenseMatrix u = random_orthogonal(rng, n);
    const DenseMatrix v = random_orthogonal(rng, n);
    DenseMatrix us = u;
    for (std::size_t k = 0; k < n; ++k) {
        double t = rng.uniform();
        if (k == 0) t = 0.0;
        if (k == 1) t = 1.0;
        const double s = std::pow(condition, -t);
        for (std::size_t r = 0; r < n; ++r) us(r, k) *= s;
    }
    return matmul_nt(us, v);
}

DenseMatrix fresh_iso(const LayerBatch& batch, const OptimizerConfig& cfg) {
    OptimizerState st = OptimizerState::zeros(batch.in_dim(), batch.out_dim(), cfg);
    return iso_step(st, batch, cfg);
}

DenseMatrix fresh_adam(const LayerBatch& batch, const OptimizerConfig& cfg) {
    OptimizerState st = OptimizerState::zeros(batch.in_dim(), batch.out_dim(), cfg);
    return adam_step(st, batch, cfg);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PropertyResult check_norm_invariance(std::size_t trials, std::uint64_t seed) {
    SeededRng rng(seed);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Iso;
    cfg.ridge_rel = 0.0;
    cfg.ridge_abs = 0.0;
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 64);
        const std::size_t m = uniform_index(rng, 2, 64);
        const std::size_t b = 2 * std::max(n, m);
        const LayerBatch base{gaussian_matrix(rng, b, n), gaussian_matrix(rng, b, m)};
        const double cond_a = std::pow(1e3, rng.uniform());
        const double cond_b = std::pow(1e3, rng.uniform());
        const DenseMatrix a = random_invertible(rng, n, cond_a);
        const DenseMatrix bm = random_invertible(rng, m, cond_b);
        const LayerBatch moved{matmul(base.X, a), matmul(base.G, bm)};
        const double n0 = frobenius_norm(fresh_iso(base, cfg));
        const double n1 = frobenius_norm(fresh_iso(moved, cfg));
        worst = std::max(worst, std::abs(n1 - n0) / n0);
    }
    return {"norm_invariance", worst <= 1e-6,
            fmt("max relative deviation %.3e over %.0f trials (bound 1e-6)", worst,
                static_cast<double>(trials))};
}

PropertyResult check_orthogonal_equivariance(std::size_t trials, std::uint64_t seed) {
    SeededRng rng(seed);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Iso;
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 48);
        const std::size_t m = uniform_index(rng, 2, 48);
        const std::size_t b = 2 * std::max(n, m);
        const LayerBatch base{gaussian_matrix(rng, b, n), gaussian_matrix(rng, b, m)};
        const DenseMatrix q = random_orthogonal(rng, n);
        const DenseMatrix u = random_orthogonal(rng, m);
        const LayerBatch moved{matmul(base.X, q), matmul(base.G, u)};
        const DenseMatrix expected = matmul_tn(q, matmul(fresh_iso(base, cfg), u));
        worst = std::max(worst, frobenius_distance(fresh_iso(moved, cfg), expected));
    }
    return {"orthogonal_equivariance", worst <= 1e-8,
            fmt("max Frobenius error %.3e over %.0f trials (bound 1e-8)", worst,
                static_cast<double>(trials))};
}

PropertyResult check_zero_gradient_scaling(std::size_t seeds, std::size_t batch, std::size_t dim,
                                           std::uint64_t seed) {
    OptimizerConfig iso_cfg;
    iso_cfg.kind = OptimizerKind::Iso;
    OptimizerConfig adam_cfg;
    adam_cfg.kind = OptimizerKind::Adam;
    adam_cfg.epsilon = 1e-12;
    std::vector<double> iso_ratio, adam_ratio;
    for (std::size_t s = 0; s < seeds; ++s) {
        SeededRng rng(derive_seed({seed, s}));
        const LayerBatch small{gaussian_matrix(rng, batch, dim), gaussian_matrix(rng, batch, dim)};
        const LayerBatch large{gaussian_matrix(rng, 4 * batch, dim),
                               gaussian_matrix(rng, 4 * batch, dim)};
        iso_ratio.push_back(frobenius_norm(fresh_iso(large, iso_cfg)) /
                            frobenius_norm(fresh_iso(small, iso_cfg)));
        adam_ratio.push_back(frobenius_norm(fresh_adam(large, adam_cfg)) /
                             frobenius_norm(fresh_adam(small, adam_cfg)));
    }
    const double iso_med = median(iso_ratio);
    const double adam_med = median(adam_ratio);
    const bool ok = iso_med >= 0.40 && iso_med <= 0.60 && adam_med >= 0.85 && adam_med <= 1.15;
    return {"zero_gradient_scaling", ok,
            fmt("median norm ratio 4b/b: iso %.4f (in [0.40, 0.60]), adam %.4f (in [0.85, 1.15])",
                iso_med, adam_med)};
}

PropertyResult check_sign_descent_limit(std::uint64_t seed) {
    SeededRng rng(seed);
    const LayerBatch batch{gaussian_matrix(rng, 64, 8), gaussian_matrix(rng, 64, 6)};
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Adam;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.99;
    cfg.epsilon = 1e-12;
    OptimizerState st = OptimizerState::zeros(8, 6, cfg);
    DenseMatrix update;
    for (int i = 0; i < 500; ++i) update = adam_step(st, batch, cfg);
    const DenseMatrix sign = sign_descent_update(batch);
    double worst = 0.0;
    for (std::size_t i = 0; i < update.size(); ++i)
        worst = std::max(worst, std::abs(update.data()[i] - sign.data()[i]));
    return {"sign_descent_limit", worst <= 1e-3,
            fmt("max |adam - sgn(grad)| after 500 steps %.3e (bound 1e-3)", worst)};
}

PropertyResult check_shampoo_iso_identity(std::size_t trials, std::uint64_t seed) {
    SeededRng rng(seed);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Iso;
    cfg.ridge_rel = 0.0;
    cfg.ridge_abs = 0.0;
    double worst_iso = 0.0, worst_shampoo = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 24);
        const DenseMatrix q = random_orthogonal(rng, n);
        std::vector<double> d1(n), d2(n);
        for (std::size_t i = 0; i < n; ++i) {
            d1[i] = 0.1 + 2.0 * rng.uniform();
            d2[i] = 0.1 + 2.0 * rng.uniform();
        }
        const LayerBatch batch{matmul(q, matmul_nt(DenseMatrix::diagonal(d1), q)),
                               matmul(q, matmul_nt(DenseMatrix::diagonal(d2), q))};
        const DenseMatrix eye = DenseMatrix::identity(n);
        worst_iso = std::max(worst_iso, frobenius_distance(fresh_iso(batch, cfg), eye));
        worst_shampoo = std::max(worst_shampoo, frobenius_distance(shampoo_update(batch, cfg), eye));
    }
    return {"shampoo_iso_identity", worst_iso <= 1e-6 && worst_shampoo <= 1e-6,
            fmt("max ||iso - I|| %.3e, max ||shampoo - I|| %.3e (bound 1e-6)", worst_iso,
                worst_shampoo)};
}

PropertyResult check_inv_sqrt_agreement(std::size_t trials, std::uint64_t seed) {
    SeededRng rng(seed);
    double worst = 0.0;
    std::size_t fallbacks = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 32);
        const double cond = std::pow(1e4, rng.uniform());
        const SpdMatrix s(random_spd(rng, n, cond));
        const InvSqrtResult ns = inv_sqrt_ns(s);
        if (ns.fell_back) ++fallbacks;
        worst = std::max(worst, frobenius_distance(ns.value, sym_pow(s, -0.5)));
    }
    return {"inv_sqrt_ns_vs_eig", worst <= 1e-6 && fallbacks == 0,
            fmt("max Frobenius difference %.3e (bound 1e-6), %.0f fallbacks", worst,
                static_cast<double>(fallbacks))};
}

PropertyResult check_shampoo_polar_agreement(std::size_t trials, std::uint64_t seed) {
    SeededRng rng(seed);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Shampoo;
    cfg.ridge_rel = 0.0;
    cfg.ridge_abs = 0.0;
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = uniform_index(rng, 2, 16);
        const LayerBatch batch{gaussian_matrix(rng, 4 * n, n), gaussian_matrix(rng, 4 * n, n)};
        worst = std::max(worst, frobenius_distance(shampoo_update(batch, cfg),
                                                   polar_project(sgd_update(batch))));
    }
    return {"shampoo_equals_polar", worst <= 1e-6,
            fmt("max Frobenius difference %.3e (bound 1e-6)", worst)};
}

PropertyResult check_isoadam_denominators(std::uint64_t seed) {
    SeededRng rng(seed);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::IsoAdam;
    OptimizerState st = OptimizerState::zeros(4, 3, cfg);
    double worst = 0.0;
    for (int t = 1; t <= 200; ++t) {
        const LayerBatch batch{gaussian_matrix(rng, 16, 4), gaussian_matrix(rng, 16, 3)};
        isoadam_step(st, batch, cfg);
        worst = std::max(worst, std::abs(st.d1 - (1.0 - std::pow(cfg.beta1, t))));
        worst = std::max(worst, std::abs(st.d2 - (1.0 - std::pow(cfg.beta2, t))));
    }
    return {"isoadam_denominators", worst <= 1e-14,
            fmt("max |d - (1 - beta^t)| %.3e over 200 steps (bound 1e-14)", worst)};
}

std::vector<PropertyResult> run_all_checks() {
    return {
        check_norm_invariance(),
        check_orthogonal_equivariance(),
        check_zero_gradient_scaling(),
        check_sign_descent_limit(),
        check_shampoo_iso_identity(),
        check_inv_sqrt_agreement(),
        check_shampoo_polar_agreement(),
        check_isoadam_denominators(),
    };
}

}  // namespace isoopt
