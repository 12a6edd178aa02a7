#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace htru {

// Base error for anything that maps to "stage failure" (CLI exit code 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config parsing / validation problems (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

uint64_t fnv1a64(const void* data, size_t len,
                 uint64_t h = 14695981039346656037ULL);
uint64_t fnv1a64(const std::string& s);
std::string to_hex64(uint64_t v);

// Deterministic seed derivation (splitmix64 over the combined words).
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c);

// round-half-up to `decimals` places; v must be finite.
double round_half_up(double v, int decimals);
// Fixed-point formatting with round-half-up (the project-wide table rule).
std::string format_fixed(double v, int decimals);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);
// Survival function of the chi-square distribution with `df` degrees of
// freedom, i.e. P(X >= x2).
double chi_square_sf(double x2, int df);

}  // namespace htru
