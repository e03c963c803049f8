#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsmo/errors.hpp"
#include "dsmo/problems.hpp"
#include "dsmo/types.hpp"

namespace dsmo {

/// One evaluation row of a run. Fields without ground truth are NaN and are
/// excluded from fits. consensus_y holds one entry per level.
struct RunRecord {
  std::string run_id;
  std::string algo;
  std::string problem;
  int K = 0;
  double rho = 0.0;
  long t = 0;
  long long samples_total = 0;  // cumulative, all agents
  double grad_norm_sq = 0.0;    // ||grad F(x_bar)||^2 via the exact oracle
  double mse_to_opt = 0.0;      // ||x_bar - x*||^2
  double obj_gap = 0.0;         // F(x_bar) - F*
  double consensus_x = 0.0;     // sum_k ||x^k - x_bar||^2 / K
  std::vector<double> consensus_y;
  double wall_ms = 0.0;
};

/// Assembles a record from per-agent iterate stacks (one column per agent).
RunRecord evaluate_record(const MultiLevelProblem& problem,
                          const std::string& run_id, const std::string& algo,
                          double rho, long t, long long samples_total,
                          const Matrix& x_stack,
                          const std::vector<Matrix>& y_stacks, double wall_ms);

/// Mean dispersion sum_k ||cols_k - mean||^2 / K of a column stack.
double consensus_error(const Matrix& stack);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  int points = 0;
};

/// Least-squares slope of log(field) against log(t) over records with
/// t in [t_min, t_max] (t < 1 never enters). NaN fields are excluded before
/// the checks; fewer than 10 usable records raises InsufficientData and any
/// non-positive value raises NonPositiveValue.
SlopeFit loglog_slope(const std::vector<RunRecord>& records, long t_min,
                      long t_max, const std::string& field);

/// Cumulative samples at the first record with field <= epsilon, in t order;
/// empty when the run never crosses.
std::optional<long long> samples_to_epsilon(
    const std::vector<RunRecord>& records, double epsilon,
    const std::string& field);

struct SpeedupRow {
  int K = 0;
  int reps = 0;
  double median_log10_samples = 0.0;
  double q125_log10_samples = 0.0;
  double q875_log10_samples = 0.0;
};

/// Per-K median and 12.5%/87.5% empirical quantiles of log10(samples to
/// epsilon), grouping mixed records by (K, run_id). Runs that never cross
/// count as +inf. Fewer than 3 runs for any K raises InsufficientData.
std::vector<SpeedupRow> speedup_table(const std::vector<RunRecord>& records,
                                      double epsilon,
                                      const std::string& field);

/// Numeric field accessor used by the report tools; throws SchemaError for
/// unknown names.
double record_field(const RunRecord& record, const std::string& field);

/// CSV with the exact header
///   run_id,algo,problem,K,rho,t,samples_total,grad_norm_sq,mse_to_opt,
///   obj_gap,consensus_x,consensus_y1..consensus_yM,wall_ms
/// and floats at 17 significant digits, so write/read round-trips exactly.
void write_csv(const std::vector<RunRecord>& records, const std::string& path);
std::string csv_to_string(const std::vector<RunRecord>& records);
std::vector<RunRecord> read_csv(const std::string& path);
std::vector<RunRecord> csv_from_string(const std::string& text);

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace dsmo
