#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace metaadr {

using Index = Eigen::Index;
using Rng = std::mt19937_64;

// Shape or value contract violated by a caller.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Task outside the environment's support.
class InvalidTask : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Environment stepped after termination.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite parameters or losses during training; the run is aborted and recorded.
class DivergedRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of stream ids.
/// Identical paths give identical streams regardless of the order work is scheduled in.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream purposes used with derive_seed.
enum class Stream : std::uint64_t {
  PolicyInit = 1,
  ParticleInit = 2,
  DiscriminatorInit = 3,
  TaskSampling = 4,
  Proposals = 5,
  TaskRollouts = 6,
  DiscriminatorSgd = 7,
  Evaluation = 8,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t s = derive_seed(base, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

/// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be written
/// to per-index slots; scheduling order never affects the outcome.
template <typename F>
void parallel_for(Index n, Index workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) f(i);
    return;
  }
  const Index count = std::min(workers, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  pool.reserve(static_cast<std::size_t>(count));
  for (Index w = 0; w < count; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Index i = w; i < n; i += count) f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// FNV-1a over raw bytes, used for artifact digests and parameter hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace metaadr
