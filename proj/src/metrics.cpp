#include "dsmo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace dsmo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double_token(const std::string& tok, const std::string& context) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty())
    throw SchemaError("csv: non-numeric value '" + tok + "' in column " +
                      context);
  return v;
}

long long parse_ll_token(const std::string& tok, const std::string& context) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end != begin + tok.size() || tok.empty())
    throw SchemaError("csv: non-integer value '" + tok + "' in column " +
                      context);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

double consensus_error(const Matrix& stack) {
  const Index K = stack.cols();
  const Vector mean = stack.rowwise().mean();
  double total = 0.0;
  for (Index k = 0; k < K; ++k) total += (stack.col(k) - mean).squaredNorm();
  return total / static_cast<double>(K);
}

RunRecord evaluate_record(const MultiLevelProblem& problem,
                          const std::string& run_id, const std::string& algo,
                          double rho, long t, long long samples_total,
                          const Matrix& x_stack,
                          const std::vector<Matrix>& y_stacks,
                          double wall_ms) {
  RunRecord rec;
  rec.run_id = run_id;
  rec.algo = algo;
  rec.problem = problem.tag();
  rec.K = static_cast<int>(x_stack.cols());
  rec.rho = rho;
  rec.t = t;
  rec.samples_total = samples_total;
  rec.wall_ms = wall_ms;

  const Vector x_bar = x_stack.rowwise().mean();
  rec.consensus_x = consensus_error(x_stack);
  for (const Matrix& ys : y_stacks) rec.consensus_y.push_back(consensus_error(ys));

  rec.grad_norm_sq = kNaN;
  rec.mse_to_opt = kNaN;
  rec.obj_gap = kNaN;
  if (problem.has_exact_oracle()) {
    try {
      rec.grad_norm_sq = exact_hypergradient(problem, x_bar).squaredNorm();
    } catch (const Error&) {
      // leave NaN; the inner solver can fail outside its convex regime
    }
    if (auto xs = problem.x_star()) rec.mse_to_opt = (x_bar - *xs).squaredNorm();
    if (auto fs = problem.f_star()) {
      try {
        rec.obj_gap = problem.objective_value(x_bar) - *fs;
      } catch (const Error&) {
      }
    }
  }
  return rec;
}

double record_field(const RunRecord& r, const std::string& field) {
  if (field == "grad_norm_sq") return r.grad_norm_sq;
  if (field == "mse_to_opt") return r.mse_to_opt;
  if (field == "obj_gap") return r.obj_gap;
  if (field == "consensus_x") return r.consensus_x;
  if (field == "rho") return r.rho;
  if (field == "wall_ms") return r.wall_ms;
  if (field == "samples_total") return static_cast<double>(r.samples_total);
  if (field.rfind("consensus_y", 0) == 0) {
    const std::size_t level = std::strtoul(field.c_str() + 11, nullptr, 10);
    if (level >= 1 && level <= r.consensus_y.size())
      return r.consensus_y[level - 1];
  }
  throw SchemaError("unknown record field: " + field);
}

SlopeFit loglog_slope(const std::vector<RunRecord>& records, long t_min,
                      long t_max, const std::string& field) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const RunRecord& r : records) {
    if (r.t < std::max<long>(t_min, 1) || r.t > t_max) continue;
    const double v = record_field(r, field);
    if (std::isnan(v)) continue;
    if (!(v > 0.0))
      throw NonPositiveValue("loglog_slope: field '" + field +
                             "' must be positive inside the window");
    xs.push_back(std::log(static_cast<double>(r.t)));
    ys.push_back(std::log(v));
  }
  if (xs.size() < 10)
    throw InsufficientData("loglog_slope: need at least 10 records in window, "
                           "got " + std::to_string(xs.size()));

  const auto n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0)
    throw InsufficientData("loglog_slope: degenerate window (single t)");
  SlopeFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    rss += e * e;
  }
  fit.residual_rms = std::sqrt(rss / n);
  fit.points = static_cast<int>(xs.size());
  return fit;
}

std::optional<long long> samples_to_epsilon(
    const std::vector<RunRecord>& records, double epsilon,
    const std::string& field) {
  std::vector<const RunRecord*> sorted;
  sorted.reserve(records.size());
  for (const RunRecord& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RunRecord* a, const RunRecord* b) {
                     return a->t < b->t;
                   });
  for (const RunRecord* r : sorted) {
    const double v = record_field(*r, field);
    if (!std::isnan(v) && v <= epsilon) return r->samples_total;
  }
  return std::nullopt;
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty())
    throw InsufficientData("empirical_quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - std::floor(pos);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<SpeedupRow> speedup_table(const std::vector<RunRecord>& records,
                                      double epsilon,
                                      const std::string& field) {
  std::map<int, std::map<std::string, std::vector<RunRecord>>> grouped;
  for (const RunRecord& r : records) grouped[r.K][r.run_id].push_back(r);

  std::vector<SpeedupRow> table;
  for (auto& [K, runs] : grouped) {
    std::vector<double> log_samples;
    for (auto& [run_id, recs] : runs) {
      const auto crossing = samples_to_epsilon(recs, epsilon, field);
      log_samples.push_back(
          crossing ? std::log10(static_cast<double>(std::max<long long>(
                         *crossing, 1)))
                   : std::numeric_limits<double>::infinity());
    }
    if (log_samples.size() < 3)
      throw InsufficientData("speedup_table: need >= 3 repetitions per K, "
                             "K=" + std::to_string(K) + " has " +
                             std::to_string(log_samples.size()));
    SpeedupRow row;
    row.K = K;
    row.reps = static_cast<int>(log_samples.size());
    row.median_log10_samples = empirical_quantile(log_samples, 0.5);
    row.q125_log10_samples = empirical_quantile(log_samples, 0.125);
    row.q875_log10_samples = empirical_quantile(log_samples, 0.875);
    table.push_back(row);
  }
  return table;
}

std::string csv_to_string(const std::vector<RunRecord>& records) {
  const std::size_t levels = records.empty() ? 1 : records.front().consensus_y.size();
  std::ostringstream out;
  out << "run_id,algo,problem,K,rho,t,samples_total,grad_norm_sq,mse_to_opt,"
         "obj_gap,consensus_x";
  for (std::size_t m = 1; m <= levels; ++m) out << ",consensus_y" << m;
  out << ",wall_ms\n";
  for (const RunRecord& r : records) {
    if (r.consensus_y.size() != levels)
      throw SchemaError("csv: records disagree on the number of levels");
    out << r.run_id << ',' << r.algo << ',' << r.problem << ',' << r.K << ','
        << format_double(r.rho) << ',' << r.t << ',' << r.samples_total << ','
        << format_double(r.grad_norm_sq) << ',' << format_double(r.mse_to_opt)
        << ',' << format_double(r.obj_gap) << ','
        << format_double(r.consensus_x);
    for (double cy : r.consensus_y) out << ',' << format_double(cy);
    out << ',' << format_double(r.wall_ms) << '\n';
  }
  return out.str();
}

void write_csv(const std::vector<RunRecord>& records,
               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << csv_to_string(records);
  if (!out) throw IoError("write failed: " + path);
}

std::vector<RunRecord> csv_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: missing header");

  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> prefix = {
      "run_id", "algo",         "problem",      "K",
      "rho",    "t",            "samples_total", "grad_norm_sq",
      "mse_to_opt", "obj_gap",  "consensus_x"};
  if (header.size() < prefix.size() + 2)
    throw SchemaError("csv: header too short; missing column " +
                      (header.size() < prefix.size()
                           ? prefix[header.size()]
                           : std::string("consensus_y1")));
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (header[i] != prefix[i])
      throw SchemaError("csv: unexpected column '" + header[i] +
                        "' where '" + prefix[i] + "' was expected");
  std::size_t levels = 0;
  std::size_t col = prefix.size();
  while (col < header.size() - 1) {
    const std::string expected = "consensus_y" + std::to_string(levels + 1);
    if (header[col] != expected)
      throw SchemaError("csv: unexpected column '" + header[col] +
                        "' where '" + expected + "' was expected");
    ++levels;
    ++col;
  }
  if (levels == 0)
    throw SchemaError("csv: unexpected column '" + header[prefix.size()] +
                      "' where 'consensus_y1' was expected");
  if (header.back() != "wall_ms")
    throw SchemaError("csv: unexpected column '" + header.back() +
                      "' where 'wall_ms' was expected");

  std::vector<RunRecord> records;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split_csv_line(line);
    if (tokens.size() != header.size())
      throw SchemaError("csv: row " + std::to_string(line_no) + " has " +
                        std::to_string(tokens.size()) + " columns, expected " +
                        std::to_string(header.size()));
    RunRecord r;
    r.run_id = tokens[0];
    r.algo = tokens[1];
    r.problem = tokens[2];
    r.K = static_cast<int>(parse_ll_token(tokens[3], "K"));
    r.rho = parse_double_token(tokens[4], "rho");
    r.t = static_cast<long>(parse_ll_token(tokens[5], "t"));
    r.samples_total = parse_ll_token(tokens[6], "samples_total");
    r.grad_norm_sq = parse_double_token(tokens[7], "grad_norm_sq");
    r.mse_to_opt = parse_double_token(tokens[8], "mse_to_opt");
    r.obj_gap = parse_double_token(tokens[9], "obj_gap");
    r.consensus_x = parse_double_token(tokens[10], "consensus_x");
    for (std::size_t m = 0; m < levels; ++m)
      r.consensus_y.push_back(parse_double_token(
          tokens[11 + m], "consensus_y" + std::to_string(m + 1)));
    r.wall_ms = parse_double_token(tokens.back(), "wall_ms");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<RunRecord> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return csv_from_string(buf.str());
}

}  // namespace dsmo
