#include <doctest.h>

#include <cmath>

#include "isoopt/linalg.hpp"
#include "isoopt/optim.hpp"
#include "isoopt/problems.hpp"
#include "support/oracle.hpp"

using namespace isoopt;

namespace {

OptimizerConfig config_for(OptimizerKind kind) {
    OptimizerConfig c;
    c.kind = kind;
    return c;
}

DenseMatrix column(std::initializer_list<double> v) {
    DenseMatrix m(v.size(), 1);
    std::size_t i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

LayerBatch random_batch(SeededRng& rng, std::size_t b, std::size_t n, std::size_t m) {
    return {gaussian_matrix(rng, b, n), gaussian_matrix(rng, b, m)};
}

DenseMatrix first_step(const LayerBatch& batch, const OptimizerConfig& cfg) {
    OptimizerState st = OptimizerState::zeros(batch.in_dim(), batch.out_dim(), cfg);
    return optimizer_step(st, batch, cfg);
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("validation rejects out-of-range hyperparameters") {
        OptimizerConfig c;
        CHECK_NOTHROW(c.validate());
        c.beta1 = 1.0;
        CHECK_THROWS_AS(c.validate(), ContractError);
        c = {};
        c.beta2 = -0.1;
        CHECK_THROWS_AS(c.validate(), ContractError);
        c = {};
        c.epsilon = 0.0;
        CHECK_THROWS_AS(c.validate(), ContractError);
        c = {};
        c.alpha = -1.0;
        CHECK_THROWS_AS(c.validate(), ContractError);
        c = {};
        c.update_interval = 0;
        CHECK_THROWS_AS(c.validate(), ContractError);
    }

    TEST_CASE("optimizer names round-trip") {
        for (auto k : {OptimizerKind::SGD, OptimizerKind::SignDescent, OptimizerKind::Adam,
                       OptimizerKind::Iso, OptimizerKind::IsoAdam, OptimizerKind::Shampoo})
            CHECK(parse_optimizer(to_string(k)) == k);
        CHECK(parse_optimizer("IsoAdam") == OptimizerKind::IsoAdam);
        CHECK_FALSE(parse_optimizer("lion").has_value());
    }
}

TEST_SUITE("sgd_update") {
    TEST_CASE("zero batch gives zero update") {
        CHECK(sgd_update({DenseMatrix(4, 3), DenseMatrix(4, 2)}) == DenseMatrix(3, 2));
    }

    TEST_CASE("batch-mean of x g") {
        const DenseMatrix u = sgd_update({column({1.0, 2.0}), column({2.0, 4.0})});
        CHECK(u(0, 0) == 5.0);
    }

    TEST_CASE("linear in the inputs: update(XA, G) = Aᵀ update(X, G)") {
        SeededRng rng(1);
        const LayerBatch batch = random_batch(rng, 20, 5, 4);
        const DenseMatrix a = gaussian_matrix(rng, 5, 5);
        const DenseMatrix lhs = sgd_update({matmul(batch.X, a), batch.G});
        CHECK(frobenius_distance(lhs, matmul_tn(a, sgd_update(batch))) < 1e-12);
    }

    TEST_CASE("mismatched batch dimension") {
        CHECK_THROWS_AS(sgd_update({DenseMatrix(4, 3), DenseMatrix(5, 2)}), ContractError);
    }

    TEST_CASE("momentum form reduces to the plain update at beta1 = 0") {
        SeededRng rng(2);
        const LayerBatch batch = random_batch(rng, 16, 3, 3);
        OptimizerConfig c = config_for(OptimizerKind::SGD);
        c.beta1 = 0.0;
        CHECK(first_step(batch, c) == sgd_update(batch));
        c.beta1 = 0.9;
        CHECK(frobenius_distance(first_step(batch, c), sgd_update(batch) * 0.1) < 1e-15);
    }
}

TEST_SUITE("sign_descent_update") {
    TEST_CASE("sign of the gradient entry") {
        const DenseMatrix u = sign_descent_update({column({1.0}), column({-3.7})});
        CHECK(u(0, 0) == -1.0);
    }

    TEST_CASE("sgn(0) = 0") {
        CHECK(sign_descent_update({DenseMatrix(3, 2), DenseMatrix(3, 2)}) == DenseMatrix(2, 2));
    }

    TEST_CASE("invariant to input scaling") {
        SeededRng rng(3);
        const LayerBatch batch = random_batch(rng, 10, 4, 4);
        CHECK(sign_descent_update({batch.X * 100.0, batch.G}) == sign_descent_update(batch));
    }
}

TEST_SUITE("adam_step") {
    TEST_CASE("first step is the sign of the gradient as epsilon vanishes") {
        SeededRng rng(4);
        const LayerBatch batch = random_batch(rng, 32, 6, 5);
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        c.epsilon = 1e-30;
        const DenseMatrix u = first_step(batch, c);
        const DenseMatrix s = sign_descent_update(batch);
        CHECK(frobenius_distance(u, s) < 1e-12);
    }

    TEST_CASE("zero gradient stream gives zero updates") {
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        OptimizerState st = OptimizerState::zeros(3, 2, c);
        for (int i = 0; i < 5; ++i)
            CHECK(adam_step(st, {DenseMatrix(4, 3), DenseMatrix(4, 2)}, c) == DenseMatrix(3, 2));
    }

    TEST_CASE("repeated batch converges to sign descent") {
        SeededRng rng(5);
        const LayerBatch batch = random_batch(rng, 64, 8, 6);
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        c.epsilon = 1e-12;
        OptimizerState st = OptimizerState::zeros(8, 6, c);
        DenseMatrix u;
        for (int i = 0; i < 500; ++i) u = adam_step(st, batch, c);
        const DenseMatrix s = sign_descent_update(batch);
        double worst = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            worst = std::max(worst, std::abs(u.data()[i] - s.data()[i]));
        CHECK(worst <= 1e-3);
    }

    TEST_CASE("without bias correction the first step carries the EMA factors") {
        SeededRng rng(6);
        const LayerBatch batch = random_batch(rng, 16, 3, 2);
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        c.bias_correction = false;
        c.epsilon = 1e-30;
        const DenseMatrix u = first_step(batch, c);
        const DenseMatrix s = sign_descent_update(batch);
        const double factor = (1.0 - c.beta1) / std::sqrt(1.0 - c.beta2);
        CHECK(frobenius_distance(u, s * factor) < 1e-12);
    }

    TEST_CASE("invariant to positive diagonal rescaling of inputs and gradients") {
        SeededRng rng(7);
        const LayerBatch batch = random_batch(rng, 40, 5, 4);
        std::vector<double> d1(5), d2(4);
        for (double& v : d1) v = std::exp(3.0 * rng.normal());
        for (double& v : d2) v = std::exp(3.0 * rng.normal());
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        c.epsilon = 1e-30;
        const LayerBatch scaled{matmul(batch.X, DenseMatrix::diagonal(d1)),
                                matmul(batch.G, DenseMatrix::diagonal(d2))};
        CHECK(frobenius_distance(first_step(scaled, c), first_step(batch, c)) < 1e-8);
    }

    TEST_CASE("V stays entrywise non-negative and d follows 1 - beta^t") {
        SeededRng rng(8);
        OptimizerConfig c = config_for(OptimizerKind::Adam);
        OptimizerState st = OptimizerState::zeros(4, 4, c);
        for (int t = 1; t <= 50; ++t) {
            adam_step(st, random_batch(rng, 8, 4, 4), c);
            for (double v : st.V.data()) CHECK(v >= 0.0);
            CHECK(st.d1 == doctest::Approx(1.0 - std::pow(c.beta1, t)).epsilon(1e-14));
            CHECK(st.d2 == doctest::Approx(1.0 - std::pow(c.beta2, t)).epsilon(1e-14));
        }
    }
}

TEST_SUITE("iso_step") {
    TEST_CASE("scalar case is the sample correlation coefficient") {
        const DenseMatrix u =
            first_step({column({1.0, 2.0}), column({2.0, 4.0})}, config_for(OptimizerKind::Iso));
        CHECK(u(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
    }

    TEST_CASE("zero gradient gives zero update") {
        SeededRng rng(9);
        const DenseMatrix u =
            first_step({gaussian_matrix(rng, 8, 4), DenseMatrix(8, 3)}, config_for(OptimizerKind::Iso));
        CHECK(u == DenseMatrix(4, 3));
    }

    TEST_CASE("first step matches the whitened cross-covariance oracle") {
        SeededRng rng(10);
        const LayerBatch batch = random_batch(rng, 50, 7, 5);
        const OptimizerConfig c = config_for(OptimizerKind::Iso);
        // Every EMA starts at zero, so step one scales M, L, R by the same
        // (1 - beta1), which cancels; the ridge is scale-relative.
        const oracle::Mat ref = oracle::whitened_cross(oracle::to_eigen(batch.X),
                                                       oracle::to_eigen(batch.G), c.ridge_rel,
                                                       c.ridge_abs / (1.0 - c.beta1));
        CHECK(frobenius_distance(first_step(batch, c), oracle::from_eigen(ref)) < 1e-10);
    }

    TEST_CASE("multi-step trajectory matches an independent recomputation") {
        SeededRng rng(11);
        OptimizerConfig c = config_for(OptimizerKind::Iso);
        OptimizerState st = OptimizerState::zeros(6, 4, c);
        oracle::Mat m = oracle::Mat::Zero(6, 4), l = oracle::Mat::Zero(6, 6), r = oracle::Mat::Zero(4, 4);
        for (int t = 0; t < 25; ++t) {
            const LayerBatch batch = random_batch(rng, 12, 6, 4);
            const DenseMatrix u = iso_step(st, batch, c);
            const oracle::Mat x = oracle::to_eigen(batch.X), g = oracle::to_eigen(batch.G);
            m += (1.0 - c.beta1) * (x.transpose() * g / 12.0 - m);
            l += (1.0 - c.beta1) * (x.transpose() * x / 12.0 - l);
            r += (1.0 - c.beta1) * (g.transpose() * g / 12.0 - r);
            oracle::Mat lr = l, rr = r;
            lr.diagonal().array() += c.ridge_rel * l.trace() / 6.0 + c.ridge_abs;
            rr.diagonal().array() += c.ridge_rel * r.trace() / 4.0 + c.ridge_abs;
            const oracle::Mat ref = oracle::spd_pow(lr, -0.5) * m * oracle::spd_pow(rr, -0.5);
            CHECK(frobenius_distance(u, oracle::from_eigen(ref)) < 1e-8 * (1.0 + ref.norm()));
            CHECK(is_symmetric(st.L, 0.0));
            CHECK(is_symmetric(st.R, 0.0));
        }
    }

    TEST_CASE("W = 0 regression: first step approaches the polar factor of Sigma A") {
        // Sampling error of the whitening transform grows like n/sqrt(b);
        // n = 8 keeps it below 0.05 at b = 4096.
        SeededRng rng(12);
        const std::size_t n = 8, b = 4096;
        const DenseMatrix sigma = random_spd(rng, n, 10.0);
        const DenseMatrix a = gaussian_matrix(rng, n, n);
        const DenseMatrix x = matmul(gaussian_matrix(rng, b, n), sigma);
        const DenseMatrix g = matmul(x, a) * -1.0;
        const DenseMatrix u = first_step({x, g}, config_for(OptimizerKind::Iso)) * -1.0;
        CHECK(frobenius_distance(u, polar_project(matmul(sigma, a))) < 0.05);
    }

    TEST_CASE("Newton-Schulz preconditioners agree with the eigen path") {
        SeededRng rng(13);
        OptimizerConfig eig = config_for(OptimizerKind::Iso);
        OptimizerConfig ns = eig;
        ns.inv_sqrt = InvSqrtMethod::NewtonSchulz;
        OptimizerState se = OptimizerState::zeros(5, 5, eig), sn = OptimizerState::zeros(5, 5, ns);
        for (int t = 0; t < 10; ++t) {
            const LayerBatch batch = random_batch(rng, 40, 5, 5);
            CHECK(frobenius_distance(iso_step(se, batch, eig), iso_step(sn, batch, ns)) < 1e-6);
        }
        CHECK(sn.ns_fallbacks == 0);
    }

    TEST_CASE("full-size subsample reproduces the full-batch step") {
        SeededRng rng(14);
        const LayerBatch batch = random_batch(rng, 30, 4, 3);
        OptimizerConfig c = config_for(OptimizerKind::Iso);
        const DenseMatrix full = first_step(batch, c);
        c.cov_subsample = 30;
        CHECK(first_step(batch, c) == full);
        c.cov_subsample = 10;
        CHECK(first_step(batch, c).is_finite());
    }

    TEST_CASE("update_interval keeps preconditioners between refreshes") {
        SeededRng rng(15);
        OptimizerConfig c = config_for(OptimizerKind::Iso);
        c.update_interval = 3;
        OptimizerState st = OptimizerState::zeros(4, 4, c);
        iso_step(st, random_batch(rng, 16, 4, 4), c);
        const DenseMatrix left = st.left_inv_sqrt;
        iso_step(st, random_batch(rng, 16, 4, 4), c);
        CHECK(st.left_inv_sqrt == left);
        iso_step(st, random_batch(rng, 16, 4, 4), c);
        iso_step(st, random_batch(rng, 16, 4, 4), c);
        CHECK_FALSE(st.left_inv_sqrt == left);
    }

    TEST_CASE("state shape mismatch") {
        OptimizerConfig c = config_for(OptimizerKind::Iso);
        OptimizerState st = OptimizerState::zeros(3, 3, c);
        CHECK_THROWS_AS(iso_step(st, {DenseMatrix(4, 2), DenseMatrix(4, 3)}, c), ContractError);
    }
}

TEST_SUITE("isoadam_step") {
    TEST_CASE("first step has unit-magnitude entries as epsilon vanishes") {
        SeededRng rng(16);
        OptimizerConfig c = config_for(OptimizerKind::IsoAdam);
        c.epsilon = 1e-30;
        const DenseMatrix u = first_step(random_batch(rng, 40, 6, 4), c);
        for (double v : u.data()) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-9));
    }

    TEST_CASE("zero gradient stream gives zero updates") {
        SeededRng rng(17);
        OptimizerConfig c = config_for(OptimizerKind::IsoAdam);
        OptimizerState st = OptimizerState::zeros(3, 2, c);
        for (int i = 0; i < 5; ++i)
            CHECK(isoadam_step(st, {gaussian_matrix(rng, 6, 3), DenseMatrix(6, 2)}, c) ==
                  DenseMatrix(3, 2));
    }

    TEST_CASE("stationary stream matches a from-scratch recomputation of the recurrences") {
        SeededRng rng(18);
        OptimizerConfig c = config_for(OptimizerKind::IsoAdam);
        OptimizerState st = OptimizerState::zeros(5, 4, c);
        const DenseMatrix mix = gaussian_matrix(rng, 5, 4);
        oracle::Mat m = oracle::Mat::Zero(5, 4), v = oracle::Mat::Zero(5, 4);
        oracle::Mat l = oracle::Mat::Zero(5, 5), r = oracle::Mat::Zero(4, 4);
        double d1 = 0.0, d2 = 0.0;
        for (int t = 0; t < 300; ++t) {
            const DenseMatrix x = gaussian_matrix(rng, 32, 5);
            const DenseMatrix g = matmul(x, mix) + gaussian_matrix(rng, 32, 4);
            const DenseMatrix u = isoadam_step(st, {x, g}, c);

            const oracle::Mat xe = oracle::to_eigen(x), ge = oracle::to_eigen(g);
            const oracle::Mat h = xe.transpose() * ge / 32.0;
            m += (1 - c.beta1) * (h - m);
            l += (1 - c.beta1) * (xe.transpose() * xe / 32.0 - l);
            r += (1 - c.beta1) * (ge.transpose() * ge / 32.0 - r);
            d1 += (1 - c.beta1) * (1 - d1);
            d2 += (1 - c.beta2) * (1 - d2);
            oracle::Mat lr = l, rr = r;
            lr.diagonal().array() += c.ridge_rel * l.trace() / 5.0 + c.ridge_abs;
            rr.diagonal().array() += c.ridge_rel * r.trace() / 4.0 + c.ridge_abs;
            const oracle::Mat li = oracle::spd_pow(lr, -0.5), ri = oracle::spd_pow(rr, -0.5);
            const oracle::Mat uu = d1 * li * h * ri;
            v += (1 - c.beta2) * (uu.cwiseProduct(uu) - v);
            const oracle::Mat num = li * m * ri;
            const oracle::Mat ref =
                num.array() / ((v.array() / d2).sqrt() + c.epsilon);
            if (t % 50 == 49)
                CHECK(frobenius_distance(u, oracle::from_eigen(ref)) < 1e-8 * (1.0 + ref.norm()));
        }
        CHECK(st.d1 == doctest::Approx(d1).epsilon(1e-15));
        CHECK(st.d2 == doctest::Approx(d2).epsilon(1e-15));
    }
}

TEST_SUITE("shampoo_update") {
    TEST_CASE("orthonormal inputs with G = X give the identity") {
        SeededRng rng(19);
        const DenseMatrix q = random_orthogonal(rng, 6);
        DenseMatrix x(6, 4);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 4; ++j) x(i, j) = q(i, j);
        const DenseMatrix u = shampoo_update({x, x}, config_for(OptimizerKind::Shampoo));
        CHECK(frobenius_distance(u, DenseMatrix::identity(4)) < 1e-6);
    }

    TEST_CASE("simultaneously diagonalizable SPD batch: Shampoo = Iso = I") {
        SeededRng rng(20);
        const std::size_t n = 6;
        const DenseMatrix q = random_orthogonal(rng, n);
        const std::vector<double> d1{0.5, 1.0, 1.5, 2.0, 2.5, 0.7}, d2{2.0, 0.6, 1.1, 0.9, 1.7, 1.3};
        const LayerBatch batch{matmul(q, matmul_nt(DenseMatrix::diagonal(d1), q)),
                               matmul(q, matmul_nt(DenseMatrix::diagonal(d2), q))};
        const DenseMatrix eye = DenseMatrix::identity(n);
        CHECK(frobenius_distance(shampoo_update(batch, config_for(OptimizerKind::Shampoo)), eye) < 1e-6);
        CHECK(frobenius_distance(first_step(batch, config_for(OptimizerKind::Iso)), eye) < 1e-6);
    }

    TEST_CASE("random batch agrees with an eigendecomposition of the same formula") {
        SeededRng rng(21);
        for (int t = 0; t < 5; ++t) {
            const LayerBatch batch = random_batch(rng, 30, 6, 5);
            const OptimizerConfig c = config_for(OptimizerKind::Shampoo);
            const DenseMatrix u = shampoo_update(batch, c);
            const oracle::Mat h = oracle::to_eigen(batch.X).transpose() * oracle::to_eigen(batch.G) / 30.0;
            oracle::Mat left = h * h.transpose(), right = h.transpose() * h;
            left.diagonal().array() += c.ridge_rel * left.trace() / 6.0 + c.ridge_abs;
            right.diagonal().array() += c.ridge_rel * right.trace() / 5.0 + c.ridge_abs;
            const oracle::Mat ref = oracle::spd_pow(left, -0.25) * h * oracle::spd_pow(right, -0.25);
            CHECK(std::abs(frobenius_norm(u) - ref.norm()) < 1e-8);
        }
    }
}

TEST_SUITE("apply_step") {
    TEST_CASE("alpha = 0 leaves W unchanged") {
        SeededRng rng(22);
        const DenseMatrix w = gaussian_matrix(rng, 3, 3);
        CHECK(apply_step(w, gaussian_matrix(rng, 3, 3), 0.0) == w);
    }

    TEST_CASE("update = W / alpha zeroes W") {
        const DenseMatrix w = DenseMatrix::from_rows({{1.0, -2.0}, {4.0, 8.0}});
        CHECK(apply_step(w, w * (1.0 / 0.25), 0.25) == DenseMatrix(2, 2));
    }

    TEST_CASE("entrywise arithmetic") {
        SeededRng rng(23);
        const DenseMatrix w = gaussian_matrix(rng, 4, 5);
        const DenseMatrix u = gaussian_matrix(rng, 4, 5);
        const DenseMatrix out = apply_step(w, u, 0.3);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(out(i, j) == w(i, j) - 0.3 * u(i, j));
        CHECK_THROWS_AS(apply_step(w, DenseMatrix(5, 4), 0.1), ContractError);
    }
}

TEST_SUITE("subsample_covariance") {
    TEST_CASE("full subsample is the exact batch covariance") {
        SeededRng rng(24);
        const DenseMatrix x = gaussian_matrix(rng, 64, 5);
        const SpdMatrix s = subsample_covariance(x, rng, 64);
        CHECK(frobenius_distance(s.mat(), gram(x) * (1.0 / 64.0)) < 1e-14);
    }

    TEST_CASE("constant rows are exact for any subsample") {
        SeededRng rng(25);
        DenseMatrix x(100, 3);
        for (std::size_t i = 0; i < 100; ++i) {
            x(i, 0) = 1.0;
            x(i, 1) = -2.0;
            x(i, 2) = 0.5;
        }
        const SpdMatrix s = subsample_covariance(x, rng, 7);
        CHECK(frobenius_distance(s.mat(), gram(x) * (1.0 / 100.0)) < 1e-14);
    }

    TEST_CASE("zero or oversized target is a contract error") {
        SeededRng rng(26);
        CHECK_THROWS_AS(subsample_covariance(DenseMatrix(10, 2), rng, 0), ContractError);
        CHECK_THROWS_AS(subsample_covariance(DenseMatrix(10, 2), rng, 11), ContractError);
    }

    // Relative Frobenius error of a k-row subsample against the b-row
    // covariance, C = E[xxᵀ]: E‖Ĉ − C‖² ≈ (1 − k/b)(tr(C)² + ‖C‖²)/k.
    double predicted_error(const DenseMatrix& c, double k, double b) {
        const double tr = c.trace();
        const double f2 = frobenius_norm(c) * frobenius_norm(c);
        return std::sqrt((1.0 - (k - 1.0) / (b - 1.0)) * (tr * tr + f2) / (k * f2));
    }

    TEST_CASE("1024 of 8192 Gaussian rows: error follows the Wishart prediction") {
        const std::size_t b = 8192, n = 32, k = 1024;
        double mean_sq = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SeededRng rng(1000 + seed);
            const DenseMatrix x = gaussian_matrix(rng, b, n);
            const DenseMatrix full = gram(x) * (1.0 / static_cast<double>(b));
            const double e = frobenius_distance(subsample_covariance(x, rng, k).mat(), full) /
                             frobenius_norm(full);
            mean_sq += e * e / 20.0;
        }
        const double predicted = predicted_error(DenseMatrix::identity(n), k, b);
        CHECK(std::sqrt(mean_sq) == doctest::Approx(predicted).epsilon(0.1));
    }

    TEST_CASE("1024 of 8192 rows with anisotropic covariance: error below 0.15") {
        const std::size_t b = 8192, n = 32, k = 1024;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SeededRng rng(2000 + seed);
            const DenseMatrix sigma = random_spd(rng, n, 10.0);
            const DenseMatrix x = matmul(gaussian_matrix(rng, b, n), sigma);
            const DenseMatrix full = gram(x) * (1.0 / static_cast<double>(b));
            const double e = frobenius_distance(subsample_covariance(x, rng, k).mat(), full) /
                             frobenius_norm(full);
            worst = std::max(worst, e);
        }
        CHECK(worst < 0.15);
    }
}
