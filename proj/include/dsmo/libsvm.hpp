#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "dsmo/errors.hpp"
#include "dsmo/types.hpp"

namespace dsmo {

/// Dense binary-classification dataset. Labels are 0/1; features come from
/// sparse LIBSVM rows padded with zeros up to the maximum seen index.
struct Dataset {
  Matrix features;  // one row per sample
  Vector labels;    // entries in {0, 1}

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

/// Parses LIBSVM text: `<label> <index>:<value> ...` with 1-based strictly
/// increasing indices per line. Labels +1/1 map to 1; -1/0 map to 0; anything
/// else is rejected. Blank lines are skipped. Errors carry line and column.
Dataset parse_libsvm(std::istream& in);
Dataset parse_libsvm_string(const std::string& text);
Dataset load_libsvm(const std::string& path);

/// Writes the same format; values use 17 significant digits so that
/// parse(write(d)) == d. Exact zeros are omitted, as is conventional.
void write_libsvm(const Dataset& data, std::ostream& out);
void save_libsvm(const Dataset& data, const std::string& path);

/// Synthetic linearly-separable-ish dataset in the same format family:
/// features uniform in [-1, 1], labels from a random hyperplane with logistic
/// flips.
Dataset make_synthetic_dataset(Index n, Index dim, std::uint64_t seed);

/// Row split into [0, n_first) and [n_first, n); used to carve train and
/// validation shares out of one draw.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, Index n_first);

}  // namespace dsmo
