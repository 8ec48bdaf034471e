// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scope {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kConfigMismatch = 3,
  kLengthOverflow = 4,
  kNumeric = 5,
  kStage = 6,
  kInternal = 7,
};

// Every failure in the library surfaces as a scope::Error; the C API maps the
// code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool ok, const std::string& what,
                    ErrorCode code = ErrorCode::kInvalidArgument) {
  if (!ok) fail(code, what);
}

// Deterministic random streams.
//
// A stream is a splitmix64-seeded xoshiro256** generator. Uniform doubles are
// taken from the top 53 bits so that any implementation of the same recipe
// reproduces draws bit-for-bit; std::uniform_real_distribution is not
// portable in that sense.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_name(std::uint64_t seed, std::string_view name);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Fisher-Yates with this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Inverse-CDF draw of an index from a normalized probability vector.
std::size_t sample_index(std::span<const double> probs, double u);

// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

double log_sum_exp(std::span<const double> values);

// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

}  // namespace scope
