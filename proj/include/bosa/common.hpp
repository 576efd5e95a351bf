#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bosa {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a vector or matrix does not have the shape an operation expects.
class DimensionError : public std::invalid_argument
{
public:
  DimensionError(std::string_view what, Index expected, Index actual);

  Index expected() const { return expected_; }
  Index actual() const { return actual_; }

private:
  Index expected_;
  Index actual_;
};

void require_dim(std::string_view what, Index expected, Index actual);

/// Seeded pseudo-random stream.
///
/// `split(k)` derives an independent child stream from the construction seed and
/// the stream id only, so children do not depend on how much of the parent has
/// been consumed. All stochastic operations in the library take one of these
/// explicitly; there is no global generator.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t stream) const;
  Rng split(std::uint64_t stream, std::uint64_t substream) const;

  std::uint64_t seed() const { return seed_; }

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  std::mt19937_64 &engine() { return engine_; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over raw bytes. Used for content hashes of artifacts and config stanzas.
class Fnv1a
{
public:
  Fnv1a &update(std::span<const std::byte> bytes);
  Fnv1a &update(std::string_view text);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_hex(std::string_view text);

/// Neumaier-compensated running sum.
class CompensatedSum
{
public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// Little-endian float64 encoding helpers shared by every binary artifact.
void append_f64(std::string &out, double value);
double read_f64(std::string_view in, std::size_t offset);

/// Numerically stable log(sum(exp(values))).
double log_sum_exp(const Eigen::Ref<const Vector> &values);

/// Run body(0..count-1) on up to `threads` workers (work-stealing by index).
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(Index count, int threads, const std::function<void(Index)> &body);

} // namespace bosa
