#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

// =============================================================================
// FILE: dualcf/common.hpp
// BRIEF: Shared error types, index aliases, seeding and hashing helpers.
//
// All matrix/model types in this library are immutable after construction and
// safe to share read-only across threads. Construction is single-threaded.
// =============================================================================

namespace dualcf {

using user_t = std::uint32_t;
using item_t = std::uint32_t;

/// Base class for all dualcf errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IndexError : public Error {
public:
  using Error::Error;
};

class DuplicateEntry : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class SplitError : public Error {
public:
  using Error::Error;
};

class EmptyInput : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

class DegreeError : public Error {
public:
  using Error::Error;
};

class DisjointnessError : public Error {
public:
  using Error::Error;
};

class CorrelationUndefined : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DegenerateBlend : public Error {
public:
  using Error::Error;
};

class SingularCorrelation : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Raised by CLI stages when an upstream artifact is missing; the message
/// names the subcommand that produces it.
class DependencyError : public Error {
public:
  using Error::Error;
};

// --------------------------------------------------------------------------
// Seed derivation and checksums
// --------------------------------------------------------------------------

/// splitmix64 step; used to derive independent sub-seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic per-unit seed (e.g. per user, per trial) from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t unit) {
  return splitmix64(master ^ splitmix64(unit + 1));
}

/// FNV-1a 64-bit over raw bytes; used for artifact checksums in the manifest.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// --------------------------------------------------------------------------
// Parallel loop
// --------------------------------------------------------------------------

inline unsigned effective_threads(unsigned requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, one per
/// worker; iterations must write disjoint outputs for the result to be
/// deterministic regardless of thread count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = effective_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (threads > n) threads = static_cast<unsigned>(n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dualcf
