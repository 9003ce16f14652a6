#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sslasr {

using WordId = int;
using WordSeq = std::vector<WordId>;
using SymbolSeq = std::vector<int>;

// Error hierarchy. Every failure surfaces as one of these; the CLI maps them
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// An internal invariant failed; carries the invariant's name.
class InvariantViolation : public Error {
 public:
  InvariantViolation(std::string invariant, const std::string& detail)
      : Error(invariant + ": " + detail), invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

// Hashing ------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

// Randomness ---------------------------------------------------------------

using Rng = std::mt19937_64;

/// Named sub-stream of a master seed. Streams with different names are
/// statistically independent, so drawing from one never shifts another.
Rng make_stream(std::uint64_t master_seed, std::string_view name);

// Text helpers -------------------------------------------------------------

std::string join_ints(std::span<const int> xs, char sep = ' ');
std::vector<int> parse_ints(std::string_view text);
std::vector<std::string> split_ws(std::string_view text);

/// printf-style fixed decimal rendering ("%.{decimals}f").
std::string fixed(double v, int decimals);

// Files --------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string file_hash(const std::filesystem::path& path);

}  // namespace sslasr
