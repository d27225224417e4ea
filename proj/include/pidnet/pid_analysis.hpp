#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pidnet::pid {

struct ControllerGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;  // 0 => PI controller
};

// Second-order plant y'' + 2 zeta wn y' + wn^2 y = dc_gain wn^2 u.
struct PlantParams {
  double wn = 1.0;
  double zeta = 0.5;
  double dc_gain = 1.0;
};

struct SimulationTrace {
  double dt = 0.0;
  double setpoint = 1.0;
  std::vector<double> t, y, e, c;
  double overshoot = 0.0;
};

// Closed-loop step response. The controller is sampled every dt:
//   c[n] = kp e[n] + ki dt sum_{k<=n} e[k] + kd (e[n] - e[n-1]) / dt
// with e[-1] = e[0] (no derivative kick), held constant while the plant is
// advanced one RK4 step. Produces floor(horizon / dt) + 1 samples.
SimulationTrace simulate_step(const ControllerGains& gains, const PlantParams& plant,
                              double dt, double horizon, double setpoint = 1.0);

struct FrequencyResponse {
  std::vector<double> omegas;
  std::vector<std::complex<double>> gains;  // C(e^{jw})
  std::vector<double> p_mag, i_mag, d_mag, c_mag;
};

FrequencyResponse frequency_response(const ControllerGains& gains,
                                     const std::vector<double>& omegas);
// n points evenly spaced on (lo, hi]; the last one is exactly hi.
std::vector<double> omega_grid(double lo, double hi, int n);

struct TapExpansion {
  std::map<std::int64_t, std::int64_t> counts;  // offset -> item count
  std::int64_t total_items = 0;

  std::int64_t min_offset() const { return counts.begin()->first; }
  std::int64_t max_offset() const { return counts.rbegin()->first; }
};

// Expands a stack of 1-D convolutions (layer 0 applied first to the input)
// into its product terms. A term picks one tap d_m per layer and reaches
// input offset sum_m d_m * prod_{m' < m} stride_{m'}.
TapExpansion receptive_field_expansion(const std::vector<int>& kernel_sizes,
                                       const std::vector<int>& strides);

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

// Share of items landing within |offset| <= window, reduced to lowest terms.
Rational locality_ratio(const TapExpansion& exp, int window);

}  // namespace pidnet::pid
