#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace nsbm {

// Sampling period of the trajectory grid, seconds. All internal timestamps are
// integer deciseconds so grid arithmetic stays exact; seconds appear only at I/O.
inline constexpr double kTau = 0.1;

// Thrown on malformed or inconsistent input data (CLI exit code 2).
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iterative routine fails to produce finite results (CLI exit code 3).
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Seconds -> deciseconds, requiring the value to sit on the 0.1 s grid.
inline std::int64_t to_ds(double seconds) {
  const double scaled = seconds * 10.0;
  const auto ds = static_cast<std::int64_t>(std::llround(scaled));
  if (std::fabs(scaled - static_cast<double>(ds)) > 1e-6) {
    throw std::invalid_argument("time " + std::to_string(seconds) +
                                " is not a multiple of tau=0.1");
  }
  return ds;
}

inline double to_seconds(std::int64_t ds) { return static_cast<double>(ds) / 10.0; }

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  a = std::fmod(a, two_pi);
  if (a <= -3.14159265358979323846) a += two_pi;
  if (a > 3.14159265358979323846) a -= two_pi;
  return a;
}

}  // namespace nsbm
