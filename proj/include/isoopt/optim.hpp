#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "isoopt/linalg.hpp"
#include "isoopt/matrix.hpp"
#include "isoopt/rng.hpp"

namespace isoopt {

enum class OptimizerKind { SGD, SignDescent, Adam, Iso, IsoAdam, Shampoo };

std::string_view to_string(OptimizerKind kind);
/// Accepts the names produced by to_string ("sgd", "sign", "adam", "iso",
/// "isoadam", "shampoo"), case-insensitively.
std::optional<OptimizerKind> parse_optimizer(std::string_view name);

enum class InvSqrtMethod { Eigen, NewtonSchulz };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Iso;
    double alpha = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    double ridge_rel = 1e-8;
    double ridge_abs = 1e-12;
    /// Estimate the L and R covariances from this many uniformly sampled
    /// batch rows instead of the full batch.
    std::optional<std::size_t> cov_subsample;
    std::uint64_t subsample_seed = 0;
    /// Adam only: divide M and V by their EMA denominators.
    bool bias_correction = true;
    /// Iso/IsoAdam: recompute L^{-1/2}, R^{-1/2} every this many steps.
    std::size_t update_interval = 1;
    InvSqrtMethod inv_sqrt = InvSqrtMethod::Eigen;

    RidgePolicy ridge_policy() const { return {ridge_rel, ridge_abs}; }

    /// Throws ContractError unless alpha ≥ 0, 0 ≤ beta1, beta2 < 1,
    /// epsilon > 0, ridges ≥ 0 and update_interval ≥ 1.
    void validate() const;
};

/// Inputs X (b×n) to a weight matrix and gradients G (b×m) of the loss
/// with respect to its outputs.
struct LayerBatch {
    DenseMatrix X;
    DenseMatrix G;

    std::size_t batch() const noexcept { return X.rows(); }
    std::size_t in_dim() const noexcept { return X.cols(); }
    std::size_t out_dim() const noexcept { return G.cols(); }
    /// Throws ContractError if X and G disagree on the batch dimension.
    void validate() const;
};

/// Persistent per-weight-matrix state. Fields an optimizer does not use
/// stay empty.
struct OptimizerState {
    DenseMatrix M;  // n×m first moment
    DenseMatrix V;  // n×m second moment (Adam, IsoAdam)
    DenseMatrix L;  // n×n input covariance EMA (Iso, IsoAdam)
    DenseMatrix R;  // m×m gradient covariance EMA (Iso, IsoAdam)
    double d1 = 0.0;
    double d2 = 0.0;
    std::size_t step_count = 0;

    // Cached preconditioners and the eigenbases used to warm-start the
    // next decomposition.
    DenseMatrix left_inv_sqrt;
    DenseMatrix right_inv_sqrt;
    DenseMatrix left_basis;
    DenseMatrix right_basis;
    std::size_t ns_fallbacks = 0;

    SeededRng subsample_rng{0};

    static OptimizerState zeros(std::size_t n, std::size_t m, const OptimizerConfig& config);
};

/// XᵀG / b.
DenseMatrix sgd_update(const LayerBatch& batch);

/// sgn(XᵀG) entrywise with sgn(0) = 0.
DenseMatrix sign_descent_update(const LayerBatch& batch);

/// M ← EMA(XᵀG/b) with beta1; returns M. beta1 = 0 gives sgd_update.
DenseMatrix sgd_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config);

/// sgn of the beta1 momentum; beta1 = 0 gives sign_descent_update.
DenseMatrix sign_descent_step(OptimizerState& state, const LayerBatch& batch,
                              const OptimizerConfig& config);

/// Adam with EMA moments M, V and optional bias correction.
DenseMatrix adam_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config);

/// Iso with momentum: ridge(L)^{-1/2} M ridge(R)^{-1/2} with M, L, R the
/// beta1 EMAs of XᵀG/b, XᵀX/b and GᵀG/b.
DenseMatrix iso_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config);

/// Iso preconditioning followed by Adam-style entrywise RMS scaling.
DenseMatrix isoadam_step(OptimizerState& state, const LayerBatch& batch,
                         const OptimizerConfig& config);

/// [H Hᵀ]^{-1/4} H [Hᵀ H]^{-1/4} with H = XᵀG/b, each factor ridged.
DenseMatrix shampoo_update(const LayerBatch& batch, const OptimizerConfig& config);

/// Dispatches on config.kind.
DenseMatrix optimizer_step(OptimizerState& state, const LayerBatch& batch,
                           const OptimizerConfig& config);

/// W − alpha · update.
DenseMatrix apply_step(const DenseMatrix& w, const DenseMatrix& update, double alpha);
void apply_step_inplace(DenseMatrix& w, const DenseMatrix& update, double alpha);

/// XsᵀXs / k over k rows of X drawn uniformly without replacement.
SpdMatrix subsample_covariance(const DenseMatrix& x, SeededRng& rng, std::size_t target_rows);

}  // namespace isoopt
