#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "isoopt/harness.hpp"

namespace isoopt {

/// Locale-independent text for a double with 17 significant
/// digits, '.' as decimal separator, "inf"/"-inf"/"nan" for non-finite.
std::string format_real(double v);

inline constexpr const char* kSweepCsvHeader =
    "optimizer,lr,seed,converged,iterations,final_loss,diverged";

/// One row per record; `iterations` is empty when the run did not converge.
void write_sweep_csv(std::ostream& out, std::span<const RunRecord> records);
nlohmann::json sweep_json(const SweepConfig& config, std::span<const RunRecord> records);
nlohmann::json summary_json(std::span<const OptimizerSummary> summaries);

nlohmann::json to_json(const RunRecord& r);
nlohmann::json to_json(const FirstStepReport& r);

struct PureNoiseRow {
    OptimizerKind optimizer;
    double alpha;
    std::size_t depth;
    PureNoiseResult result;
};

inline constexpr const char* kPureNoiseCsvHeader =
    "optimizer,alpha,depth,slope,initial_norm,final_norm,max_norm,bounded,overflowed";
inline constexpr const char* kPureNoiseSeriesHeader = "optimizer,alpha,depth,step,norm";

void write_pure_noise_csv(std::ostream& out, std::span<const PureNoiseRow> rows);
void write_pure_noise_series_csv(std::ostream& out, std::span<const PureNoiseRow> rows);

}  // namespace isoopt
