#include "isoopt/optim.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

namespace isoopt {

namespace {

constexpr std::array<std::pair<OptimizerKind, std::string_view>, 6> kNames{{
    {OptimizerKind::SGD, "sgd"},
    {OptimizerKind::SignDescent, "sign"},
    {OptimizerKind::Adam, "adam"},
    {OptimizerKind::Iso, "iso"},
    {OptimizerKind::IsoAdam, "isoadam"},
    {OptimizerKind::Shampoo, "shampoo"},
}};

// m ← m + (1 − decay)(target − m)
void ema(DenseMatrix& m, const DenseMatrix& target, double decay) {
    auto md = m.data();
    auto td = target.data();
    const double w = 1.0 - decay;
    for (std::size_t i = 0; i < md.size(); ++i) md[i] += w * (td[i] - md[i]);
}

void ema(double& d, double decay) { d += (1.0 - decay) * (1.0 - d); }

void require_state_shape(const OptimizerState& state, const LayerBatch& batch, const char* what) {
    if (state.M.rows() != batch.in_dim() || state.M.cols() != batch.out_dim())
        throw ContractError(std::string(what) + ": optimizer state is " +
                            std::to_string(state.M.rows()) + "x" + std::to_string(state.M.cols()) +
                            " but batch implies " + std::to_string(batch.in_dim()) + "x" +
                            std::to_string(batch.out_dim()));
}

DenseMatrix batch_covariance(const DenseMatrix& x, const OptimizerConfig& config, SeededRng& rng) {
    if (config.cov_subsample && *config.cov_subsample < x.rows())
        return subsample_covariance(x, rng, *config.cov_subsample).mat();
    return gram(x) * (1.0 / static_cast<double>(x.rows()));
}

DenseMatrix inverse_sqrt(const DenseMatrix& cov, DenseMatrix& basis, const OptimizerConfig& config,
                         std::size_t& fallbacks) {
    const SpdMatrix ridged = ridge(cov, config.ridge_policy());
    if (config.inv_sqrt == InvSqrtMethod::NewtonSchulz) {
        InvSqrtResult r = inv_sqrt_ns(ridged);
        if (r.fell_back) ++fallbacks;
        return std::move(r.value);
    }
    Eigendecomposition eig = sym_eig(ridged, basis.empty() ? nullptr : &basis);
    DenseMatrix out = sym_pow(eig, -0.5);
    basis = std::move(eig.eigenvectors);
    return out;
}

// Shared M, L, R bookkeeping for Iso and IsoAdam. Returns XᵀG/b.
DenseMatrix update_iso_moments(OptimizerState& state, const LayerBatch& batch,
                               const OptimizerConfig& config, const char* what) {
    config.validate();
    batch.validate();
    require_state_shape(state, batch, what);

    DenseMatrix grad = sgd_update(batch);
    ema(state.M, grad, config.beta1);
    ema(state.L, batch_covariance(batch.X, config, state.subsample_rng), config.beta1);
    ema(state.R, batch_covariance(batch.G, config, state.subsample_rng), config.beta1);
    symmetrize(state.L);
    symmetrize(state.R);
    ema(state.d1, config.beta1);
    ema(state.d2, config.beta2);

    if (state.step_count % config.update_interval == 0 || state.left_inv_sqrt.empty()) {
        state.left_inv_sqrt = inverse_sqrt(state.L, state.left_basis, config, state.ns_fallbacks);
        state.right_inv_sqrt = inverse_sqrt(state.R, state.right_basis, config, state.ns_fallbacks);
    }
    ++state.step_count;
    return grad;
}

DenseMatrix precondition(const OptimizerState& state, const DenseMatrix& m) {
    return matmul(state.left_inv_sqrt, matmul(m, state.right_inv_sqrt));
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    for (const auto& [k, name] : kNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "signdescent" || lower == "sign_descent") lower = "sign";
    for (const auto& [k, n] : kNames)
        if (n == lower) return k;
    return std::nullopt;
}

void OptimizerConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw ContractError("optimizer config: alpha must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ContractError("optimizer config: beta1 not in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("optimizer config: beta2 not in [0, 1)");
    if (!(epsilon > 0.0)) throw ContractError("optimizer config: epsilon must be > 0");
    if (!(ridge_rel >= 0.0) || !(ridge_abs >= 0.0))
        throw ContractError("optimizer config: ridge terms must be >= 0");
    if (update_interval == 0) throw ContractError("optimizer config: update_interval must be >= 1");
    if (cov_subsample && *cov_subsample == 0)
        throw ContractError("optimizer config: cov_subsample must be >= 1");
}

void LayerBatch::validate() const {
    if (X.rows() != G.rows())
        throw ContractError("LayerBatch: X has " + std::to_string(X.rows()) + " rows but G has " +
                            std::to_string(G.rows()));
    if (X.rows() == 0) throw ContractError("LayerBatch: empty batch");
}

OptimizerState OptimizerState::zeros(std::size_t n, std::size_t m, const OptimizerConfig& config) {
    OptimizerState s;
    s.M = DenseMatrix(n, m);
    switch (config.kind) {
        case OptimizerKind::Adam:
            s.V = DenseMatrix(n, m);
            break;
        case OptimizerKind::IsoAdam:
            s.V = DenseMatrix(n, m);
            [[fallthrough]];
        case OptimizerKind::Iso:
            s.L = DenseMatrix(n, n);
            s.R = DenseMatrix(m, m);
            break;
        default:
            break;
    }
    s.subsample_rng = SeededRng(config.subsample_seed);
    return s;
}

DenseMatrix sgd_update(const LayerBatch& batch) {
    batch.validate();
    DenseMatrix g = matmul_tn(batch.X, batch.G);
    g *= 1.0 / static_cast<double>(batch.batch());
    return g;
}

DenseMatrix sign_descent_update(const LayerBatch& batch) {
    DenseMatrix g = sgd_update(batch);
    for (double& v : g.data()) v = static_cast<double>((v > 0.0) - (v < 0.0));
    return g;
}

DenseMatrix sgd_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config) {
    config.validate();
    require_state_shape(state, batch, "sgd_step");
    ema(state.M, sgd_update(batch), config.beta1);
    ++state.step_count;
    return state.M;
}

DenseMatrix sign_descent_step(OptimizerState& state, const LayerBatch& batch,
                              const OptimizerConfig& config) {
    DenseMatrix m = sgd_step(state, batch, config);
    for (double& v : m.data()) v = static_cast<double>((v > 0.0) - (v < 0.0));
    return m;
}

DenseMatrix adam_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config) {
    config.validate();
    batch.validate();
    require_state_shape(state, batch, "adam_step");

    const DenseMatrix grad = sgd_update(batch);
    ema(state.M, grad, config.beta1);
    ema(state.V, hadamard(grad, grad), config.beta2);
    ema(state.d1, config.beta1);
    ema(state.d2, config.beta2);
    ++state.step_count;

    const double m_scale = config.bias_correction ? 1.0 / state.d1 : 1.0;
    const double v_scale = config.bias_correction ? 1.0 / state.d2 : 1.0;
    DenseMatrix update(grad.rows(), grad.cols());
    auto md = state.M.data();
    auto vd = state.V.data();
    auto ud = update.data();
    for (std::size_t i = 0; i < ud.size(); ++i)
        ud[i] = md[i] * m_scale / (std::sqrt(std::max(0.0, vd[i] * v_scale)) + config.epsilon);
    return update;
}

DenseMatrix iso_step(OptimizerState& state, const LayerBatch& batch, const OptimizerConfig& config) {
    update_iso_moments(state, batch, config, "iso_step");
    return precondition(state, state.M);
}

DenseMatrix isoadam_step(OptimizerState& state, const LayerBatch& batch,
                         const OptimizerConfig& config) {
    const DenseMatrix grad = update_iso_moments(state, batch, config, "isoadam_step");

    DenseMatrix u = precondition(state, grad);
    u *= state.d1;
    ema(state.V, hadamard(u, u), config.beta2);

    DenseMatrix update = precondition(state, state.M);
    auto ud = update.data();
    auto vd = state.V.data();
    for (std::size_t i = 0; i < ud.size(); ++i)
        ud[i] /= std::sqrt(std::max(0.0, vd[i] / state.d2)) + config.epsilon;
    return update;
}

DenseMatrix shampoo_update(const LayerBatch& batch, const OptimizerConfig& config) {
    const DenseMatrix h = sgd_update(batch);
    const DenseMatrix left = sym_pow(ridge(matmul_nt(h, h), config.ridge_policy()), -0.25);
    const DenseMatrix right = sym_pow(ridge(gram(h), config.ridge_policy()), -0.25);
    return matmul(left, matmul(h, right));
}

DenseMatrix optimizer_step(OptimizerState& state, const LayerBatch& batch,
                           const OptimizerConfig& config) {
    switch (config.kind) {
        case OptimizerKind::SGD:
            return sgd_step(state, batch, config);
        case OptimizerKind::SignDescent:
            return sign_descent_step(state, batch, config);
        case OptimizerKind::Adam:
            return adam_step(state, batch, config);
        case OptimizerKind::Iso:
            return iso_step(state, batch, config);
        case OptimizerKind::IsoAdam:
            return isoadam_step(state, batch, config);
        case OptimizerKind::Shampoo:
            ++state.step_count;
            return shampoo_update(batch, config);
    }
    throw ContractError("optimizer_step: unknown optimizer kind");
}

DenseMatrix apply_step(const DenseMatrix& w, const DenseMatrix& update, double alpha) {
    DenseMatrix out = w;
    apply_step_inplace(out, update, alpha);
    return out;
}

void apply_step_inplace(DenseMatrix& w, const DenseMatrix& update, double alpha) {
    require_same_shape(w, update, "apply_step");
    auto wd = w.data();
    auto ud = update.data();
    for (std::size_t i = 0; i < wd.size(); ++i) wd[i] -= alpha * ud[i];
}

SpdMatrix subsample_covariance(const DenseMatrix& x, SeededRng& rng, std::size_t target_rows) {
    if (target_rows == 0) throw ContractError("subsample_covariance: target_rows must be >= 1");
    if (target_rows > x.rows())
        throw ContractError("subsample_covariance: target_rows exceeds the batch size");
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    picked.reserve(target_rows);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), target_rows, rng.engine());

    DenseMatrix sub(target_rows, x.cols());
    for (std::size_t i = 0; i < target_rows; ++i) {
        const auto src = x.row(picked[i]);
        std::copy(src.begin(), src.end(), sub.row(i).begin());
    }
    DenseMatrix cov = gram(sub);
    cov *= 1.0 / static_cast<double>(target_rows);
    return SpdMatrix(std::move(cov));
}

}  // namespace isoopt
