#include "bosa/common.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace bosa {

DimensionError::DimensionError(std::string_view what, Index expected, Index actual)
  : std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(expected) + ", got " +
                          std::to_string(actual))
  , expected_(expected)
  , actual_(actual)
{
}

void require_dim(std::string_view what, Index expected, Index actual)
{
  if (expected != actual) { throw DimensionError(what, expected, actual); }
}

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed)
  : seed_(seed)
  , engine_(splitmix64(seed))
{
}

Rng Rng::split(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL))); }

Rng Rng::split(std::uint64_t stream, std::uint64_t substream) const { return split(stream).split(substream); }

double Rng::uniform()
{
  // 53 random mantissa bits; independent of the standard library's distribution code.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() { return normal_(engine_); }

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::uint64_t Rng::index(std::uint64_t n)
{
  if (n == 0) { throw std::invalid_argument("Rng::index: empty range"); }
  // Lemire's nearly-divisionless bounded draw.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = engine_();
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) { return static_cast<std::uint64_t>(m >> 64); }
  }
}

Vector Rng::normal_vector(Index n)
{
  Vector out(n);
  for (Index i = 0; i < n; ++i) { out[i] = normal(); }
  return out;
}

Matrix Rng::normal_matrix(Index rows, Index cols)
{
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) { out(i, j) = normal(); }
  }
  return out;
}

Fnv1a &Fnv1a::update(std::span<const std::byte> bytes)
{
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

Fnv1a &Fnv1a::update(std::string_view text) { return update(std::as_bytes(std::span(text.data(), text.size()))); }

std::string Fnv1a::hex() const
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  std::uint64_t v = state_;
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string hash_hex(std::string_view text) { return Fnv1a{}.update(text).hex(); }

void CompensatedSum::add(double x)
{
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

void append_f64(std::string &out, double value)
{
  auto bits = std::bit_cast<std::uint64_t>(value);
  if constexpr (std::endian::native == std::endian::big) { bits = __builtin_bswap64(bits); }
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

double read_f64(std::string_view in, std::size_t offset)
{
  if (offset + 8 > in.size()) { throw std::runtime_error("read_f64: truncated binary block"); }
  std::uint64_t bits;
  std::memcpy(&bits, in.data() + offset, 8);
  if constexpr (std::endian::native == std::endian::big) { bits = __builtin_bswap64(bits); }
  return std::bit_cast<double>(bits);
}

double log_sum_exp(const Eigen::Ref<const Vector> &values)
{
  if (values.size() == 0) { return -std::numeric_limits<double>::infinity(); }
  const double peak = values.maxCoeff();
  if (!std::isfinite(peak)) { return peak; }
  return peak + std::log((values.array() - peak).exp().sum());
}

void parallel_for(Index count, int threads, const std::function<void(Index)> &body)
{
  if (count <= 0) { return; }
  const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), count));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) { body(i); }
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (Index i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) { failure = std::current_exception(); }
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) { pool.emplace_back(work); }
  for (auto &t : pool) { t.join(); }
  if (failure) { std::rethrow_exception(failure); }
}

} // namespace bosa
