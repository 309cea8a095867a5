#include "isoopt/problems.hpp"

#include <cmath>
#include <string>

#include "isoopt/linalg.hpp"

namespace isoopt {

LinearChainModel LinearChainModel::random(SeededRng& rng, std::size_t n, std::size_t depth) {
    LinearChainModel model;
    model.init_scale = 1.0 / std::sqrt(static_cast<double>(n));
    model.layers.reserve(depth);
    for (std::size_t l = 0; l < depth; ++l)
        model.layers.push_back(gaussian_matrix(rng, n, n, model.init_scale));
    return model;
}

LinearChainModel LinearChainModel::zeros(std::size_t n, std::size_t depth) {
    LinearChainModel model;
    model.layers.assign(depth, DenseMatrix(n, n));
    return model;
}

DenseMatrix LinearChainModel::product() const {
    if (layers.empty()) throw ContractError("LinearChainModel::product: no layers");
    DenseMatrix p = layers.front();
    for (std::size_t l = 1; l < layers.size(); ++l) p = matmul(p, layers[l]);
    return p;
}

double LinearChainModel::weight_norm() const {
    double s = 0.0;
    for (const auto& w : layers) {
        const double f = frobenius_norm(w);
        s += f * f;
    }
    return std::sqrt(s);
}

bool LinearChainModel::is_finite() const {
    for (const auto& w : layers)
        if (!w.is_finite()) return false;
    return true;
}

std::string_view to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::PureNoise:
            return "pure_noise";
        case ProblemKind::DeepRegression:
            return "deep_regression";
        case ProblemKind::SigmaRegression:
            return "sigma_regression";
    }
    return "unknown";
}

std::optional<ProblemKind> parse_problem(std::string_view name) {
    if (name == "pure_noise" || name == "purenoise") return ProblemKind::PureNoise;
    if (name == "deep_regression" || name == "regression") return ProblemKind::DeepRegression;
    if (name == "sigma_regression") return ProblemKind::SigmaRegression;
    return std::nullopt;
}

DenseMatrix ProblemInstance::target_map() const {
    switch (kind) {
        case ProblemKind::DeepRegression:
            return transpose(A);
        case ProblemKind::SigmaRegression:
            return A;
        case ProblemKind::PureNoise:
            break;
    }
    throw ContractError("target_map: the pure noise problem has no regression target");
}

DenseMatrix ProblemInstance::sample_inputs(SeededRng& rng, std::size_t b) const {
    DenseMatrix z = gaussian_matrix(rng, b, n);
    if (kind == ProblemKind::SigmaRegression) return matmul(z, Sigma);
    return z;
}

DenseMatrix ProblemInstance::targets(const DenseMatrix& x) const { return matmul(x, target_map()); }

ProblemInstance make_pure_noise(std::size_t n, std::size_t batch_size) {
    ProblemInstance p;
    p.kind = ProblemKind::PureNoise;
    p.n = n;
    p.batch_size = batch_size;
    return p;
}

ProblemInstance make_deep_regression(SeededRng& rng, std::size_t n, std::size_t batch_size) {
    ProblemInstance p;
    p.kind = ProblemKind::DeepRegression;
    p.n = n;
    p.batch_size = batch_size;
    p.A = gaussian_matrix(rng, n, n);
    return p;
}

ProblemInstance make_sigma_regression(SeededRng& rng, std::size_t n, std::size_t batch_size,
                                      double sigma_condition) {
    ProblemInstance p;
    p.kind = ProblemKind::SigmaRegression;
    p.n = n;
    p.batch_size = batch_size;
    p.Sigma = random_spd(rng, n, sigma_condition);
    p.A = gaussian_matrix(rng, n, n);
    return p;
}

GradResult pure_noise_grad(const DenseMatrix& y, SeededRng& rng) {
    GradResult r;
    r.grad = gaussian_matrix(rng, y.rows(), y.cols());
    double s = 0.0;
    auto yd = y.data();
    auto zd = r.grad.data();
    for (std::size_t i = 0; i < yd.size(); ++i) s += yd[i] * zd[i];
    r.loss = y.rows() == 0 ? 0.0 : s / static_cast<double>(y.rows());
    return r;
}

GradResult regression_grad(const DenseMatrix& y, const DenseMatrix& target) {
    require_same_shape(y, target, "regression_grad");
    GradResult r;
    r.grad = y - target;
    const double f = frobenius_norm(r.grad);
    r.loss = y.rows() == 0 ? 0.0 : 0.5 * f * f / static_cast<double>(y.rows());
    return r;
}

ForwardBackwardTrace forward_backward(const LinearChainModel& model, const DenseMatrix& x,
                                      const GradientSource& source) {
    const std::size_t k = model.depth();
    if (k == 0) throw ContractError("forward_backward: model has no layers");
    if (x.cols() != model.dim())
        throw ContractError("forward_backward: input has " + std::to_string(x.cols()) +
                            " features but the model expects " + std::to_string(model.dim()));

    ForwardBackwardTrace trace;
    trace.layers.resize(k);
    DenseMatrix h = x;
    for (std::size_t l = 0; l < k; ++l) {
        DenseMatrix next = matmul(h, model.layers[l]);
        trace.layers[l].X = std::move(h);
        h = std::move(next);
    }
    GradResult top = source(h);
    if (!top.grad.same_shape(h))
        throw ContractError("forward_backward: gradient source returned the wrong shape");
    trace.output = std::move(h);
    trace.loss = top.loss;

    DenseMatrix g = std::move(top.grad);
    for (std::size_t l = k; l-- > 0;) {
        DenseMatrix prev;
        if (l > 0) prev = matmul(g, transpose(model.layers[l]));
        trace.layers[l].G = std::move(g);
        g = std::move(prev);
    }
    return trace;
}

double scaled_loss(const LinearChainModel& model, const ProblemInstance& problem,
                   const DenseMatrix& eval_x) {
    const DenseMatrix target = problem.targets(eval_x);
    DenseMatrix y = eval_x;
    for (const auto& w : model.layers) y = matmul(y, w);
    const double err = frobenius_distance(y, target);
    const double base = frobenius_norm(target);
    return 10.0 * (err * err) / (base * base);
}

EvalSet::EvalSet(const ProblemInstance& problem, const DenseMatrix& eval_x)
    : moment_(gram(eval_x) * (1.0 / static_cast<double>(eval_x.rows()))),
      target_map_(problem.target_map()) {
    const DenseMatrix ct = matmul(moment_, target_map_);
    double s = 0.0;
    for (std::size_t i = 0; i < ct.rows(); ++i)
        for (std::size_t j = 0; j < ct.cols(); ++j) s += target_map_(i, j) * ct(i, j);
    baseline_ = s;
}

double EvalSet::scaled_loss(const LinearChainModel& model) const {
    DenseMatrix d = model.product();
    d -= target_map_;
    const DenseMatrix cd = matmul(moment_, d);
    double s = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) s += d(i, j) * cd(i, j);
    return 10.0 * s / baseline_;
}

FirstStepForms first_step_closed_forms(const DenseMatrix& sigma, const DenseMatrix& a) {
    if (!is_symmetric(sigma, SpdMatrix::symmetry_tolerance(sigma)))
        throw ContractError("first_step_closed_forms: Sigma must be symmetric");
    const DenseMatrix sa = matmul(sigma, a);
    DenseMatrix s2a = matmul(sigma, sa);
    for (double& v : s2a.data()) v = static_cast<double>((v > 0.0) - (v < 0.0));
    return {std::move(s2a), polar_project(sa)};
}

}  // namespace isoopt
