#include "isoopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "isoopt/linalg.hpp"

namespace isoopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroBaseline = 10.0;

// Sub-stream tags under a problem seed.
enum StreamTag : std::uint64_t { kTarget = 1, kInit = 2, kEval = 3, kTrain = 4, kNoise = 5 };

ProblemInstance make_problem(const RunSpec& spec, SeededRng& rng) {
    switch (spec.problem) {
        case ProblemKind::DeepRegression:
            return make_deep_regression(rng, spec.n, spec.batch_size);
        case ProblemKind::SigmaRegression:
            return make_sigma_regression(rng, spec.n, spec.batch_size, spec.sigma_condition);
        case ProblemKind::PureNoise:
            break;
    }
    throw ContractError("run_single: pure noise runs go through run_pure_noise");
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return kInf;
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

bool RunRecord::same_result(const RunRecord& o) const {
    auto same_double = [](double a, double b) {
        return a == b || (std::isnan(a) && std::isnan(b));
    };
    if (optimizer != o.optimizer || lr != o.lr || lr_index != o.lr_index || seed != o.seed ||
        iterations_to_convergence != o.iterations_to_convergence || diverged != o.diverged ||
        !same_double(final_loss, o.final_loss) || loss_series.size() != o.loss_series.size())
        return false;
    for (std::size_t i = 0; i < loss_series.size(); ++i) {
        if (loss_series[i].first != o.loss_series[i].first ||
            !same_double(loss_series[i].second, o.loss_series[i].second))
            return false;
    }
    return true;
}

RunRecord run_single(const RunSpec& spec) {
    spec.optimizer.validate();
    if (spec.depth == 0 || spec.n == 0 || spec.batch_size == 0)
        throw ContractError("run_single: depth, n and batch size must be positive");
    if (spec.eval.eval_interval == 0 || spec.eval.eval_batch == 0)
        throw ContractError("run_single: eval interval and eval batch must be positive");

    const auto start = std::chrono::steady_clock::now();

    SeededRng target_rng(derive_seed({spec.problem_seed, kTarget}));
    SeededRng init_rng(derive_seed({spec.problem_seed, kInit}));
    SeededRng eval_rng(derive_seed({spec.problem_seed, kEval}));
    SeededRng train_rng(derive_seed({spec.problem_seed, kTrain}));

    const ProblemInstance problem = make_problem(spec, target_rng);
    LinearChainModel model = LinearChainModel::random(init_rng, spec.n, spec.depth);
    const EvalSet eval(problem, problem.sample_inputs(eval_rng, spec.eval.eval_batch));

    std::vector<OptimizerState> states;
    std::vector<OptimizerConfig> configs;
    for (std::size_t l = 0; l < spec.depth; ++l) {
        OptimizerConfig cfg = spec.optimizer;
        cfg.subsample_seed = derive_seed({spec.optimizer_seed, l});
        states.push_back(OptimizerState::zeros(spec.n, spec.n, cfg));
        configs.push_back(cfg);
    }

    const double converge_below = kZeroBaseline * spec.eval.convergence_threshold;
    const double diverge_above = kZeroBaseline * spec.eval.divergence_factor;

    RunRecord rec;
    rec.optimizer = spec.optimizer.kind;
    rec.lr = spec.optimizer.alpha;

    auto evaluate = [&](std::size_t it) {
        const double loss = eval.scaled_loss(model);
        rec.loss_series.emplace_back(it, loss);
        rec.final_loss = loss;
        if (!std::isfinite(loss) || loss > diverge_above) {
            rec.diverged = true;
            return true;
        }
        if (loss < converge_below && !rec.iterations_to_convergence) {
            rec.iterations_to_convergence = it;
            if (spec.eval.stop_on_convergence) return true;
        }
        return false;
    };

    bool stop = evaluate(0);
    for (std::size_t it = 1; it <= spec.max_iters && !stop; ++it) {
        const DenseMatrix x = problem.sample_inputs(train_rng, spec.batch_size);
        const DenseMatrix target = problem.targets(x);
        const ForwardBackwardTrace trace = forward_backward(
            model, x, [&](const DenseMatrix& y) { return regression_grad(y, target); });

        for (std::size_t l = 0; l < spec.depth; ++l) {
            const DenseMatrix update = optimizer_step(states[l], trace.layers[l], configs[l]);
            apply_step_inplace(model.layers[l], update, configs[l].alpha);
        }
        if (!model.is_finite()) {
            rec.diverged = true;
            rec.final_loss = kInf;
            rec.loss_series.emplace_back(it, kInf);
            break;
        }
        if (it % spec.eval.eval_interval == 0 || it == spec.max_iters) stop = evaluate(it);
    }

    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

void SweepConfig::validate() const {
    if (optimizers.empty()) throw ContractError("sweep: optimizer list is empty");
    if (seeds.empty()) throw ContractError("sweep: seed list is empty");
    if (lr_count == 0) throw ContractError("sweep: lr_count must be >= 1");
    if (!(lr_min > 0.0) || !(lr_max > 0.0) || lr_min > lr_max)
        throw ContractError("sweep: need 0 < lr_min <= lr_max");
    if (n == 0 || depth == 0 || batch_size == 0)
        throw ContractError("sweep: dim, depth and batch must be positive");
    if (problem == ProblemKind::PureNoise)
        throw ContractError("sweep: the pure noise problem has no loss to sweep on");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ContractError("sweep: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ContractError("sweep: epsilon must be > 0");
    if (!(eval.convergence_threshold > 0.0)) throw ContractError("sweep: bad convergence threshold");
    if (eval.eval_interval == 0 || eval.eval_batch == 0)
        throw ContractError("sweep: eval interval and eval batch must be positive");
}

SweepConfig fig3_preset() { return SweepConfig{}; }

SweepConfig fig4_preset() {
    SweepConfig c;
    c.depth = 40;
    c.max_iters = 1000;
    c.mode = SweepMode::FinalLoss;
    c.eval.stop_on_convergence = false;
    return c;
}

std::vector<double> learning_rates(const SweepConfig& config) {
    std::vector<double> lrs(config.lr_count);
    if (config.lr_count == 1) {
        lrs[0] = config.lr_max;
        return lrs;
    }
    const double ratio = config.lr_min / config.lr_max;
    for (std::size_t i = 0; i < config.lr_count; ++i) {
        lrs[i] = config.lr_max *
                 std::pow(ratio, static_cast<double>(i) / static_cast<double>(config.lr_count - 1));
    }
    return lrs;
}

RunSpec make_run_spec(const SweepConfig& config, OptimizerKind kind, std::size_t lr_index,
                      std::size_t seed_index) {
    RunSpec spec;
    spec.problem = config.problem;
    spec.n = config.n;
    spec.depth = config.depth;
    spec.batch_size = config.batch_size;
    spec.max_iters = config.max_iters;
    spec.eval = config.eval;
    spec.optimizer.kind = kind;
    spec.optimizer.alpha = learning_rates(config).at(lr_index);
    spec.optimizer.beta1 = config.beta1;
    spec.optimizer.beta2 = config.beta2;
    spec.optimizer.epsilon = config.epsilon;
    spec.problem_seed = derive_seed({config.base_seed, config.seeds.at(seed_index)});
    spec.optimizer_seed = derive_seed({config.base_seed, static_cast<std::uint64_t>(kind),
                                       lr_index, seed_index});
    return spec;
}

std::vector<RunRecord> run_sweep(const SweepConfig& config, const SweepProgress& progress) {
    config.validate();
    const std::vector<double> lrs = learning_rates(config);

    struct Cell {
        OptimizerKind kind;
        std::size_t lr_index;
        std::size_t seed_index;
    };
    std::vector<Cell> cells;
    for (OptimizerKind kind : config.optimizers)
        for (std::size_t i = 0; i < lrs.size(); ++i)
            for (std::size_t s = 0; s < config.seeds.size(); ++s) cells.push_back({kind, i, s});

    std::vector<RunRecord> out(cells.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex progress_mutex;

    auto worker = [&] {
        for (std::size_t c = next++; c < cells.size(); c = next++) {
            const Cell& cell = cells[c];
            RunRecord rec = run_single(make_run_spec(config, cell.kind, cell.lr_index, cell.seed_index));
            rec.lr_index = cell.lr_index;
            rec.seed = config.seeds[cell.seed_index];
            out[c] = std::move(rec);
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(++done, cells.size());
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, cells.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    return out;
}

double divergence_slope(std::span<const double> norm_series) {
    if (norm_series.size() < 10)
        throw ContractError("divergence_slope: need at least 10 samples");
    const double n = static_cast<double>(norm_series.size());
    const double x_mean = (n - 1.0) / 2.0;
    double y_mean = 0.0;
    for (double v : norm_series) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ContractError("divergence_slope: norms must be positive and finite");
        y_mean += std::log(v);
    }
    y_mean /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < norm_series.size(); ++i) {
        const double dx = static_cast<double>(i) - x_mean;
        sxy += dx * (std::log(norm_series[i]) - y_mean);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

std::vector<OptimizerSummary> best_per_optimizer(std::span<const RunRecord> records,
                                                 SweepMode mode) {
    if (records.empty()) throw ContractError("best_per_optimizer: no records");

    struct LrCell {
        double lr = 0.0;
        std::vector<double> metrics;
    };
    std::vector<OptimizerKind> order;
    std::map<OptimizerKind, std::map<std::size_t, LrCell>> grouped;
    std::map<OptimizerKind, std::size_t> converged;
    for (const RunRecord& r : records) {
        if (!grouped.contains(r.optimizer)) order.push_back(r.optimizer);
        LrCell& cell = grouped[r.optimizer][r.lr_index];
        cell.lr = r.lr;
        double metric = kInf;
        if (mode == SweepMode::IterationsToConvergence) {
            if (r.iterations_to_convergence) metric = static_cast<double>(*r.iterations_to_convergence);
        } else if (!r.diverged && std::isfinite(r.final_loss)) {
            metric = r.final_loss;
        }
        cell.metrics.push_back(metric);
        if (r.converged()) ++converged[r.optimizer];
    }

    std::vector<OptimizerSummary> out;
    for (OptimizerKind kind : order) {
        OptimizerSummary s;
        s.optimizer = kind;
        s.converged_runs = converged[kind];
        s.metric = kInf;
        for (const auto& [index, cell] : grouped[kind]) {
            const double m = median(cell.metrics);
            if (m == kInf) continue;
            if (!s.best_lr || m < s.metric || (m == s.metric && cell.lr < *s.best_lr)) {
                s.metric = m;
                s.best_lr = cell.lr;
                s.best_lr_index = index;
            }
        }
        s.no_convergence = !s.best_lr.has_value();
        out.push_back(s);
    }
    return out;
}

PureNoiseResult run_pure_noise(const PureNoiseSpec& spec) {
    spec.optimizer.validate();
    if (spec.depth == 0 || spec.n == 0 || spec.batch_size == 0)
        throw ContractError("run_pure_noise: depth, n and batch size must be positive");

    SeededRng init_rng(derive_seed({spec.seed, kInit}));
    SeededRng input_rng(derive_seed({spec.seed, kTrain}));
    SeededRng noise_rng(derive_seed({spec.seed, kNoise}));

    LinearChainModel model = LinearChainModel::random(init_rng, spec.n, spec.depth);
    std::vector<OptimizerState> states;
    std::vector<OptimizerConfig> configs;
    for (std::size_t l = 0; l < spec.depth; ++l) {
        OptimizerConfig cfg = spec.optimizer;
        cfg.subsample_seed = derive_seed({spec.seed, kNoise, l});
        states.push_back(OptimizerState::zeros(spec.n, spec.n, cfg));
        configs.push_back(cfg);
    }

    PureNoiseResult res;
    res.norms.reserve(spec.steps + 1);
    res.norms.push_back(model.weight_norm());
    for (std::size_t step = 0; step < spec.steps; ++step) {
        const DenseMatrix x = gaussian_matrix(input_rng, spec.batch_size, spec.n);
        const ForwardBackwardTrace trace = forward_backward(
            model, x, [&](const DenseMatrix& y) { return pure_noise_grad(y, noise_rng); });
        for (std::size_t l = 0; l < spec.depth; ++l) {
            const DenseMatrix update = optimizer_step(states[l], trace.layers[l], configs[l]);
            apply_step_inplace(model.layers[l], update, configs[l].alpha);
        }
        const double norm = model.weight_norm();
        if (!std::isfinite(norm) || norm > spec.overflow_norm) {
            res.overflowed = true;
            break;
        }
        res.norms.push_back(norm);
    }

    res.initial_norm = res.norms.front();
    res.final_norm = res.overflowed ? kInf : res.norms.back();
    res.max_norm = res.overflowed ? kInf : *std::max_element(res.norms.begin(), res.norms.end());
    res.bounded = res.max_norm <= spec.bound_factor * res.initial_norm;
    res.slope = res.norms.size() >= 10 ? divergence_slope(res.norms) : kInf;
    return res;
}

FirstStepReport first_step_report(std::size_t n, std::size_t batch, std::uint64_t seed,
                                  double sigma_condition) {
    SeededRng rng(derive_seed({seed, kTarget}));
    const ProblemInstance p = make_sigma_regression(rng, n, batch, sigma_condition);
    FirstStepReport r = first_step_report(p.Sigma, p.A, batch, seed);
    return r;
}

FirstStepReport first_step_report(const DenseMatrix& sigma, const DenseMatrix& a,
                                  std::size_t batch, std::uint64_t seed) {
    ProblemInstance p;
    p.kind = ProblemKind::SigmaRegression;
    p.n = a.rows();
    p.Sigma = sigma;
    p.A = a;
    p.batch_size = batch;

    SeededRng data_rng(derive_seed({seed, kTrain}));
    const DenseMatrix x = p.sample_inputs(data_rng, batch);
    const DenseMatrix target = p.targets(x);
    const LinearChainModel model = LinearChainModel::zeros(p.n, 1);
    const ForwardBackwardTrace trace =
        forward_backward(model, x, [&](const DenseMatrix& y) { return regression_grad(y, target); });

    OptimizerConfig adam_cfg;
    adam_cfg.kind = OptimizerKind::Adam;
    OptimizerState adam_state = OptimizerState::zeros(p.n, p.n, adam_cfg);
    const DenseMatrix adam = adam_step(adam_state, trace.layers[0], adam_cfg) * -1.0;

    OptimizerConfig iso_cfg;
    iso_cfg.kind = OptimizerKind::Iso;
    OptimizerState iso_state = OptimizerState::zeros(p.n, p.n, iso_cfg);
    const DenseMatrix iso = iso_step(iso_state, trace.layers[0], iso_cfg) * -1.0;

    const FirstStepForms forms = first_step_closed_forms(sigma, a);

    FirstStepReport r;
    r.n = p.n;
    r.batch = batch;
    r.seed = seed;
    std::size_t agree = 0;
    auto ad = adam.data();
    auto ed = forms.adam_expected.data();
    for (std::size_t i = 0; i < ad.size(); ++i) {
        const double s = static_cast<double>((ad[i] > 0.0) - (ad[i] < 0.0));
        if (s == ed[i]) ++agree;
    }
    r.adam_sign_agreement = static_cast<double>(agree) / static_cast<double>(ad.size());
    r.iso_distance = frobenius_distance(iso, forms.iso_expected);
    r.iso_orthogonality = orthogonality_defect(iso);
    return r;
}

}  // namespace isoopt
