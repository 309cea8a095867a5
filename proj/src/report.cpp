#include "isoopt/report.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace isoopt {

namespace {

const char* flag(bool b) { return b ? "true" : "false"; }

nlohmann::json real_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return {buf, res.ptr};
}

void write_sweep_csv(std::ostream& out, std::span<const RunRecord> records) {
    out << kSweepCsvHeader << '\n';
    for (const RunRecord& r : records) {
        out << to_string(r.optimizer) << ',' << format_real(r.lr) << ',' << r.seed << ','
            << flag(r.converged()) << ',';
        if (r.iterations_to_convergence) out << *r.iterations_to_convergence;
        out << ',' << format_real(r.final_loss) << ',' << flag(r.diverged) << '\n';
    }
}

nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& [it, loss] : r.loss_series) series.push_back({it, real_or_null(loss)});
    nlohmann::json j{
        {"optimizer", to_string(r.optimizer)},
        {"lr", r.lr},
        {"lr_index", r.lr_index},
        {"seed", r.seed},
        {"converged", r.converged()},
        {"iterations_to_convergence", nullptr},
        {"final_loss", real_or_null(r.final_loss)},
        {"diverged", r.diverged},
        {"wall_time", r.wall_time},
        {"loss_series", std::move(series)},
    };
    if (r.iterations_to_convergence) j["iterations_to_convergence"] = *r.iterations_to_convergence;
    return j;
}

nlohmann::json sweep_json(const SweepConfig& config, std::span<const RunRecord> records) {
    nlohmann::json opts = nlohmann::json::array();
    for (OptimizerKind k : config.optimizers) opts.push_back(to_string(k));
    nlohmann::json runs = nlohmann::json::array();
    for (const RunRecord& r : records) runs.push_back(to_json(r));
    return {
        {"config",
         {{"optimizers", opts},
          {"lr_count", config.lr_count},
          {"lr_min", config.lr_min},
          {"lr_max", config.lr_max},
          {"dim", config.n},
          {"depth", config.depth},
          {"batch", config.batch_size},
          {"max_iters", config.max_iters},
          {"seeds", config.seeds},
          {"problem", to_string(config.problem)},
          {"beta1", config.beta1},
          {"beta2", config.beta2},
          {"epsilon", config.epsilon},
          {"eval_interval", config.eval.eval_interval},
          {"eval_batch", config.eval.eval_batch},
          {"convergence_threshold", config.eval.convergence_threshold},
          {"mode", config.mode == SweepMode::FinalLoss ? "final_loss" : "iterations"}}},
        {"runs", std::move(runs)},
    };
}

nlohmann::json summary_json(std::span<const OptimizerSummary> summaries) {
    nlohmann::json out = nlohmann::json::array();
    for (const OptimizerSummary& s : summaries) {
        nlohmann::json j{{"optimizer", to_string(s.optimizer)},
                         {"best_lr", nullptr},
                         {"metric", real_or_null(s.metric)},
                         {"converged_runs", s.converged_runs},
                         {"no_convergence", s.no_convergence}};
        if (s.best_lr) j["best_lr"] = *s.best_lr;
        out.push_back(std::move(j));
    }
    return out;
}

nlohmann::json to_json(const FirstStepReport& r) {
    return {{"n", r.n},
            {"batch", r.batch},
            {"seed", r.seed},
            {"adam_sign_agreement", r.adam_sign_agreement},
            {"iso_polar_distance", r.iso_distance},
            {"iso_orthogonality_defect", r.iso_orthogonality}};
}

void write_pure_noise_csv(std::ostream& out, std::span<const PureNoiseRow> rows) {
    out << kPureNoiseCsvHeader << '\n';
    for (const PureNoiseRow& row : rows) {
        const PureNoiseResult& r = row.result;
        out << to_string(row.optimizer) << ',' << format_real(row.alpha) << ',' << row.depth << ','
            << format_real(r.slope) << ',' << format_real(r.initial_norm) << ','
            << format_real(r.final_norm) << ',' << format_real(r.max_norm) << ','
            << flag(r.bounded) << ',' << flag(r.overflowed) << '\n';
    }
}

void write_pure_noise_series_csv(std::ostream& out, std::span<const PureNoiseRow> rows) {
    out << kPureNoiseSeriesHeader << '\n';
    for (const PureNoiseRow& row : rows) {
        for (std::size_t s = 0; s < row.result.norms.size(); ++s) {
            out << to_string(row.optimizer) << ',' << format_real(row.alpha) << ',' << row.depth
                << ',' << s << ',' << format_real(row.result.norms[s]) << '\n';
        }
    }
}

}  // namespace isoopt
