#include <doctest.h>

#include <cmath>
#include <limits>

#include "isoopt/linalg.hpp"
#include "isoopt/matrix.hpp"

using namespace isoopt;

namespace {

DenseMatrix naive_product(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("product variants agree with the textbook triple loop") {
    SeededRng rng(1);
    const DenseMatrix a = gaussian_matrix(rng, 7, 5);
    const DenseMatrix b = gaussian_matrix(rng, 5, 9);
    const DenseMatrix c = gaussian_matrix(rng, 7, 9);
    const DenseMatrix ref = naive_product(a, b);
    CHECK(frobenius_distance(matmul(a, b), ref) < 1e-13);
    CHECK(frobenius_distance(matmul_tn(transpose(a), b), ref) < 1e-13);
    CHECK(frobenius_distance(matmul_nt(a, transpose(b)), ref) < 1e-13);
    CHECK(frobenius_distance(gram(c), naive_product(transpose(c), c)) < 1e-13);
    CHECK(is_symmetric(gram(c), 0.0));
}

TEST_CASE("shape mismatches are contract errors") {
    CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ContractError);
    CHECK_THROWS_AS(matmul_tn(DenseMatrix(2, 3), DenseMatrix(3, 3)), ContractError);
    CHECK_THROWS_AS(DenseMatrix(2, 2) + DenseMatrix(2, 3), ContractError);
    CHECK_THROWS_AS(DenseMatrix(2, 2, std::vector<double>(3)), ContractError);
    CHECK_THROWS_AS(DenseMatrix(2, 3).trace(), ContractError);
}

TEST_CASE("finiteness check flags NaN and Inf entries") {
    DenseMatrix m(2, 2, 1.0);
    CHECK(m.is_finite());
    m(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(m.is_finite());
    m(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(m.is_finite());
}

TEST_CASE("random_orthogonal is orthogonal") {
    SeededRng rng(2);
    for (std::size_t n : {1u, 2u, 17u, 64u}) CHECK(orthogonality_defect(random_orthogonal(rng, n)) < 1e-12);
}
