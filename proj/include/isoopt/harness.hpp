#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "isoopt/optim.hpp"
#include "isoopt/problems.hpp"

namespace isoopt {

struct EvalPolicy {
    std::size_t eval_interval = 10;
    std::size_t eval_batch = 8192;
    /// Converged once MSE < threshold × zero-baseline MSE.
    double convergence_threshold = 0.01;
    /// Diverged once MSE > factor × zero-baseline MSE.
    double divergence_factor = 100.0;
    bool stop_on_convergence = true;
};

/// One training run on a deep linear regression problem.
struct RunSpec {
    ProblemKind problem = ProblemKind::DeepRegression;
    std::size_t n = 32;
    std::size_t depth = 5;
    std::size_t batch_size = 128;
    double sigma_condition = 10.0;  // SigmaRegression only
    OptimizerConfig optimizer;
    std::size_t max_iters = 20000;
    EvalPolicy eval;
    /// Seeds the target matrix, the initial weights, the evaluation batch
    /// and the training stream.
    std::uint64_t problem_seed = 0;
    /// Seeds optimizer-internal randomness (covariance subsampling).
    std::uint64_t optimizer_seed = 0;
};

struct RunRecord {
    OptimizerKind optimizer = OptimizerKind::SGD;
    double lr = 0.0;
    std::size_t lr_index = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> iterations_to_convergence;
    double final_loss = 0.0;
    bool diverged = false;
    std::vector<std::pair<std::size_t, double>> loss_series;  // (iteration, scaled loss)
    double wall_time = 0.0;                                   // seconds

    bool converged() const noexcept { return iterations_to_convergence.has_value(); }
    /// Field-by-field equality of everything except wall_time.
    bool same_result(const RunRecord& other) const;
};

/// Trains every layer with the configured optimizer, evaluating the scaled
/// loss on a held-out batch every eval_interval iterations. Non-finite
/// weights end the run with `diverged` set.
RunRecord run_single(const RunSpec& spec);

enum class SweepMode { IterationsToConvergence, FinalLoss };

struct SweepConfig {
    std::vector<OptimizerKind> optimizers{OptimizerKind::SGD, OptimizerKind::Adam,
                                          OptimizerKind::Iso, OptimizerKind::IsoAdam};
    std::size_t lr_count = 30;
    double lr_min = 1e-4;
    double lr_max = 0.5;
    std::size_t n = 32;
    std::size_t depth = 5;
    std::size_t batch_size = 128;
    std::size_t max_iters = 20000;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    ProblemKind problem = ProblemKind::DeepRegression;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    EvalPolicy eval;
    SweepMode mode = SweepMode::IterationsToConvergence;
    std::size_t workers = 1;
    std::uint64_t base_seed = 0;

    void validate() const;
};

/// 5-layer protocol: n=32, b=128, β₁=0.9, β₂=0.99, 30 learning rates
/// log-spaced over [1e-4, 0.5], iterations to 1% of the zero baseline.
SweepConfig fig3_preset();
/// 40 layers, 1000 iterations, final scaled loss, otherwise as fig3.
SweepConfig fig4_preset();

/// lr_i = lr_max · (lr_min/lr_max)^{i/(lr_count−1)}, descending.
std::vector<double> learning_rates(const SweepConfig& config);

/// RunSpec for one cell of the sweep grid.
RunSpec make_run_spec(const SweepConfig& config, OptimizerKind kind, std::size_t lr_index,
                      std::size_t seed_index);

using SweepProgress = std::function<void(std::size_t done, std::size_t total)>;

/// Cartesian product optimizers × learning rates × seeds, ordered by
/// (optimizer in config order, lr_index, seed position). Cells run on up
/// to config.workers threads.
std::vector<RunRecord> run_sweep(const SweepConfig& config, const SweepProgress& progress = {});

/// Least-squares slope of ln(norm) against the sample index.
double divergence_slope(std::span<const double> norm_series);

struct OptimizerSummary {
    OptimizerKind optimizer = OptimizerKind::SGD;
    std::optional<double> best_lr;
    std::optional<std::size_t> best_lr_index;
    /// Median over seeds at best_lr; +inf when nothing qualified.
    double metric = 0.0;
    std::size_t converged_runs = 0;
    bool no_convergence = false;
};

/// Per optimizer, the learning rate minimizing the median over seeds of
/// iterations to convergence (non-converged counts as +inf) or of the final
/// loss (diverged counts as +inf). Ties go to the smaller learning rate.
std::vector<OptimizerSummary> best_per_optimizer(std::span<const RunRecord> records, SweepMode mode);

struct PureNoiseSpec {
    std::size_t depth = 2;
    std::size_t n = 32;
    std::size_t batch_size = 1;
    std::size_t steps = 2000;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    /// Stop recording once the weight norm passes this value.
    double overflow_norm = 1e150;
    double bound_factor = 20.0;
};

struct PureNoiseResult {
    std::vector<double> norms;  // ‖(W₁, …, W_k)‖_F at steps 0, 1, …
    double slope = 0.0;
    double initial_norm = 0.0;
    double final_norm = 0.0;
    double max_norm = 0.0;
    bool bounded = false;    // max_norm ≤ bound_factor × initial_norm
    bool overflowed = false; // norm left the representable range before `steps`
};

/// Trains a deep linear chain against pure Gaussian noise gradients.
PureNoiseResult run_pure_noise(const PureNoiseSpec& spec);

struct FirstStepReport {
    std::size_t n = 0;
    std::size_t batch = 0;
    std::uint64_t seed = 0;
    double adam_sign_agreement = 0.0;  // fraction of entries equal to sgn(Σ²A)
    double iso_distance = 0.0;         // ‖iso step − polar_project(ΣA)‖_F
    double iso_orthogonality = 0.0;    // ‖PᵀP − I‖_F of the iso step
};

/// One Adam step and one Iso step on the Σ-regression problem at W = 0,
/// compared with their closed forms. Steps are negated so that they point
/// along the descent direction the closed forms describe.
FirstStepReport first_step_report(std::size_t n, std::size_t batch, std::uint64_t seed,
                                  double sigma_condition = 10.0);
/// As above with caller-supplied Σ and A.
FirstStepReport first_step_report(const DenseMatrix& sigma, const DenseMatrix& a,
                                  std::size_t batch, std::uint64_t seed);

}  // namespace isoopt
