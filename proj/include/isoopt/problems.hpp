#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "isoopt/matrix.hpp"
#include "isoopt/optim.hpp"
#include "isoopt/rng.hpp"

namespace isoopt {

/// Deep linear chain: outputs are computed row-wise as y = x W₁ W₂ … W_k,
/// i.e. yᵀ = (W₁ … W_k)ᵀ xᵀ for a column input.
struct LinearChainModel {
    std::vector<DenseMatrix> layers;
    double init_scale = 0.0;

    /// W_l ~ N(0, I)/√n for every layer.
    static LinearChainModel random(SeededRng& rng, std::size_t n, std::size_t depth);
    static LinearChainModel zeros(std::size_t n, std::size_t depth);

    std::size_t dim() const { return layers.empty() ? 0 : layers.front().rows(); }
    std::size_t depth() const { return layers.size(); }
    /// W₁ W₂ … W_k.
    DenseMatrix product() const;
    /// sqrt(Σ_l ‖W_l‖_F²).
    double weight_norm() const;
    bool is_finite() const;
};

enum class ProblemKind { PureNoise, DeepRegression, SigmaRegression };

std::string_view to_string(ProblemKind kind);
std::optional<ProblemKind> parse_problem(std::string_view name);

/// A synthetic problem. Inputs are x = Σz (Σ = I unless SigmaRegression)
/// and regression targets are the rows of X · target_map().
struct ProblemInstance {
    ProblemKind kind = ProblemKind::DeepRegression;
    std::size_t n = 0;
    DenseMatrix A;
    DenseMatrix Sigma;
    std::size_t batch_size = 0;

    /// Matrix T_map with targets T = X T_map. DeepRegression uses y = Ax
    /// (T_map = Aᵀ); SigmaRegression uses the row form Y = ZΣA (T_map = A),
    /// under which the loss is minimized at W = A.
    DenseMatrix target_map() const;
    /// b×n batch of inputs drawn from the problem's input distribution.
    DenseMatrix sample_inputs(SeededRng& rng, std::size_t b) const;
    DenseMatrix targets(const DenseMatrix& x) const;
};

ProblemInstance make_pure_noise(std::size_t n, std::size_t batch_size);
/// A ~ N(0, I_{n×n}).
ProblemInstance make_deep_regression(SeededRng& rng, std::size_t n, std::size_t batch_size);
/// A ~ N(0, I_{n×n}), Σ random SPD with the given condition number.
ProblemInstance make_sigma_regression(SeededRng& rng, std::size_t n, std::size_t batch_size,
                                      double sigma_condition);

struct GradResult {
    DenseMatrix grad;  // ∂loss/∂y per sample (b×n)
    double loss = 0.0;
};

using GradientSource = std::function<GradResult(const DenseMatrix& y)>;

/// Fresh Z ~ N(0, I) shaped like y, independent of y; loss is Σ y⊙Z / b.
GradResult pure_noise_grad(const DenseMatrix& y, SeededRng& rng);

/// Loss ½‖y − target‖² summed over features and averaged over the batch;
/// the returned per-sample gradient is y − target.
GradResult regression_grad(const DenseMatrix& y, const DenseMatrix& target);

struct ForwardBackwardTrace {
    /// layers[l] = (h_{l}, ∂loss/∂h_{l+1}) in zero-based numbering.
    std::vector<LayerBatch> layers;
    DenseMatrix output;
    double loss = 0.0;
};

/// h₀ = X, h_l = h_{l−1} W_l, G_k from `source`, G_{l−1} = G_l W_lᵀ.
/// The gradient of W_l is sgd_update(trace.layers[l]).
ForwardBackwardTrace forward_backward(const LinearChainModel& model, const DenseMatrix& x,
                                      const GradientSource& source);

/// 10 × MSE(model) / MSE(zero predictor), both measured on `eval_x`.
double scaled_loss(const LinearChainModel& model, const ProblemInstance& problem,
                   const DenseMatrix& eval_x);

/// Evaluation batch reduced to its second moment, which makes the scaled
/// loss of a linear model an O(n³) computation. Produces the same value
/// as scaled_loss on the batch it was built from.
class EvalSet {
public:
    EvalSet(const ProblemInstance& problem, const DenseMatrix& eval_x);
    double scaled_loss(const LinearChainModel& model) const;
    double baseline_mse() const noexcept { return baseline_; }

private:
    DenseMatrix moment_;      // XᵀX / N
    DenseMatrix target_map_;
    double baseline_ = 0.0;   // mean ‖target‖² over the batch
};

struct FirstStepForms {
    DenseMatrix adam_expected;  // sgn(Σ²A)
    DenseMatrix iso_expected;   // polar_project(ΣA)
};

FirstStepForms first_step_closed_forms(const DenseMatrix& sigma, const DenseMatrix& a);

}  // namespace isoopt
