#include "dsmo/libsvm.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <vector>

#include "dsmo/rng.hpp"

namespace dsmo {
namespace {

struct Row {
  double label;
  std::vector<std::pair<long, double>> entries;
};

bool parse_double(const std::string& token, double& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + token.size() && !token.empty();
}

bool parse_long(const std::string& token, long& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtol(begin, &end, 10);
  return end == begin + token.size() && !token.empty();
}

}  // namespace

Dataset parse_libsvm(std::istream& in) {
  std::vector<Row> rows;
  long max_index = 0;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Column bookkeeping: token start positions are 1-based.
    std::size_t pos = 0;
    auto skip_spaces = [&] {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' ||
                                   line[pos] == '\r'))
        ++pos;
    };
    auto next_token = [&](std::string& tok, long& col) {
      skip_spaces();
      col = static_cast<long>(pos) + 1;
      std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' &&
             line[pos] != '\r')
        ++pos;
      tok = line.substr(start, pos - start);
      return !tok.empty();
    };

    std::string token;
    long col = 1;
    if (!next_token(token, col)) continue;  // blank line

    Row row;
    if (!parse_double(token, row.label))
      throw ParseError("non-numeric label '" + token + "'", line_no, col);
    if (row.label != 1.0 && row.label != -1.0 && row.label != 0.0)
      throw ParseError("label must be one of {+1, -1, 0}", line_no, col);
    row.label = (row.label == 1.0) ? 1.0 : 0.0;

    long prev_index = 0;
    while (next_token(token, col)) {
      const std::size_t colon = token.find(':');
      if (colon == std::string::npos)
        throw ParseError("missing ':' in feature token '" + token + "'",
                         line_no, col);
      long index = 0;
      if (!parse_long(token.substr(0, colon), index))
        throw ParseError("non-numeric feature index '" +
                             token.substr(0, colon) + "'",
                         line_no, col);
      if (index <= prev_index)
        throw ParseError("feature indices must be strictly increasing "
                         "and 1-based",
                         line_no, col);
      double value = 0.0;
      if (!parse_double(token.substr(colon + 1), value))
        throw ParseError("non-numeric feature value '" +
                             token.substr(colon + 1) + "'",
                         line_no, static_cast<long>(colon) + col + 1);
      row.entries.emplace_back(index, value);
      prev_index = index;
    }
    max_index = std::max(max_index, prev_index);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.features = Matrix::Zero(static_cast<Index>(rows.size()), max_index);
  data.labels = Vector::Zero(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    data.labels[static_cast<Index>(r)] = rows[r].label;
    for (const auto& [index, value] : rows[r].entries)
      data.features(static_cast<Index>(r), index - 1) = value;
  }
  return data;
}

Dataset parse_libsvm_string(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

Dataset load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open LIBSVM file: " + path);
  return parse_libsvm(in);
}

void write_libsvm(const Dataset& data, std::ostream& out) {
  char buf[64];
  for (Index r = 0; r < data.size(); ++r) {
    out << (data.labels[r] == 1.0 ? "1" : "-1");
    for (Index c = 0; c < data.dim(); ++c) {
      const double v = data.features(r, c);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << (c + 1) << ':' << buf;
    }
    out << '\n';
  }
}

void save_libsvm(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write LIBSVM file: " + path);
  write_libsvm(data, out);
  if (!out) throw IoError("write failed: " + path);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, Index n_first) {
  if (n_first < 1 || n_first >= data.size())
    throw InvalidParam("split_dataset: split point outside the dataset");
  Dataset first;
  first.features = data.features.topRows(n_first);
  first.labels = data.labels.head(n_first);
  Dataset second;
  second.features = data.features.bottomRows(data.size() - n_first);
  second.labels = data.labels.tail(data.size() - n_first);
  return {std::move(first), std::move(second)};
}

Dataset make_synthetic_dataset(Index n, Index dim, std::uint64_t seed) {
  if (n < 1 || dim < 1)
    throw InvalidParam("make_synthetic_dataset: n and dim must be >= 1");
  RngStream rng(derive_key(seed, {static_cast<std::uint64_t>(
                                      RngPurpose::ProblemData),
                                  0xDA7AULL}));
  Vector plane(dim);
  for (Index j = 0; j < dim; ++j) plane[j] = rng.normal();
  plane.normalize();

  Dataset data;
  data.features = Matrix(n, dim);
  data.labels = Vector(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j)
      data.features(i, j) = rng.uniform(-1.0, 1.0);
    const double margin = 3.0 * data.features.row(i).dot(plane);
    const double p = 1.0 / (1.0 + std::exp(-margin));
    data.labels[i] = rng.uniform() < p ? 1.0 : 0.0;
  }
  return data;
}

}  // namespace dsmo
