#include "pidnet/pid_analysis.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "pidnet/tensor.hpp"

namespace pidnet::pid {
namespace {

using State = std::array<double, 2>;  // y, y'

State derivative(const State& s, double u, const PlantParams& p) {
  const double w2 = p.wn * p.wn;
  return {s[1], p.dc_gain * w2 * u - 2.0 * p.zeta * p.wn * s[1] - w2 * s[0]};
}

State rk4(const State& s, double u, double dt, const PlantParams& p) {
  auto axpy = [](const State& a, double h, const State& b) {
    return State{a[0] + h * b[0], a[1] + h * b[1]};
  };
  const State k1 = derivative(s, u, p);
  const State k2 = derivative(axpy(s, dt / 2, k1), u, p);
  const State k3 = derivative(axpy(s, dt / 2, k2), u, p);
  const State k4 = derivative(axpy(s, dt, k3), u, p);
  return {s[0] + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
          s[1] + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
}

}  // namespace

SimulationTrace simulate_step(const ControllerGains& gains, const PlantParams& plant,
                              double dt, double horizon, double setpoint) {
  if (!std::isfinite(gains.kp) || !std::isfinite(gains.ki) || !std::isfinite(gains.kd)) {
    throw ValueError("simulate_step: gains must be finite");
  }
  if (!(plant.wn > 0) || plant.zeta < 0) {
    throw ValueError("simulate_step: need wn > 0 and zeta >= 0");
  }
  if (!(dt > 0) || dt * plant.wn >= 0.1) {
    throw ValueError("simulate_step: dt must satisfy 0 < dt * wn < 0.1");
  }
  if (!(horizon >= 0)) throw ValueError("simulate_step: horizon must be >= 0");

  SimulationTrace tr;
  tr.dt = dt;
  tr.setpoint = setpoint;
  const auto steps = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
  tr.t.reserve(steps + 1);

  State s{0.0, 0.0};
  double integral = 0.0;
  double e_prev = 0.0;
  double y_max = 0.0;
  for (std::size_t n = 0; n <= steps; ++n) {
    const double e = setpoint - s[0];
    if (n == 0) e_prev = e;
    integral += e * dt;
    const double c = gains.kp * e + gains.ki * integral + gains.kd * (e - e_prev) / dt;
    e_prev = e;

    tr.t.push_back(static_cast<double>(n) * dt);
    tr.y.push_back(s[0]);
    tr.e.push_back(e);
    tr.c.push_back(c);
    y_max = n == 0 ? s[0] : std::max(y_max, s[0]);

    if (n == steps) break;
    s = rk4(s, c, dt, plant);
    if (!std::isfinite(s[0]) || std::abs(s[0]) > 1e6) {
      throw DivergenceError("simulate_step: |y| exceeded 1e6 at t=" +
                            std::to_string(static_cast<double>(n + 1) * dt));
    }
  }
  // Measured relative to the setpoint direction so negative steps work too.
  if (setpoint >= 0) {
    tr.overshoot = std::max(0.0, y_max - setpoint);
  } else {
    double y_min = tr.y.front();
    for (double v : tr.y) y_min = std::min(y_min, v);
    tr.overshoot = std::max(0.0, setpoint - y_min);
  }
  return tr;
}

FrequencyResponse frequency_response(const ControllerGains& gains,
                                     const std::vector<double>& omegas) {
  FrequencyResponse fr;
  fr.omegas = omegas;
  const double pi = std::acos(-1.0);
  for (double w : omegas) {
    if (!(w > 0) || w > pi + 1e-12) {
      throw ValueError("frequency_response: omega must lie in (0, pi], got " +
                       std::to_string(w));
    }
    const std::complex<double> diff = 1.0 - std::polar(1.0, -w);  // 1 - e^{-jw}
    const std::complex<double> p = gains.kp;
    const std::complex<double> i = gains.ki / diff;
    const std::complex<double> d = gains.kd * diff;
    fr.gains.push_back(p + i + d);
    fr.p_mag.push_back(std::abs(p));
    fr.i_mag.push_back(std::abs(i));
    fr.d_mag.push_back(std::abs(d));
    fr.c_mag.push_back(std::abs(p + i + d));
  }
  return fr;
}

std::vector<double> omega_grid(double lo, double hi, int n) {
  if (n < 1) throw ValueError("omega_grid: n must be >= 1");
  std::vector<double> g(n);
  for (int k = 0; k < n; ++k) g[k] = k == n - 1 ? hi : lo + (hi - lo) * (k + 1) / n;
  return g;
}

TapExpansion receptive_field_expansion(const std::vector<int>& kernel_sizes,
                                       const std::vector<int>& strides) {
  if (kernel_sizes.size() != strides.size()) {
    throw ValueError("receptive_field_expansion: kernel and stride lists differ in length");
  }
  if (kernel_sizes.empty()) throw ValueError("receptive_field_expansion: no layers");
  for (std::size_t m = 0; m < kernel_sizes.size(); ++m) {
    if (kernel_sizes[m] < 1 || kernel_sizes[m] % 2 == 0) {
      throw ValueError("receptive_field_expansion: kernel " +
                       std::to_string(kernel_sizes[m]) + " at layer " + std::to_string(m) +
                       " must be odd");
    }
    if (strides[m] < 1) throw ValueError("receptive_field_expansion: stride must be >= 1");
  }

  // Every partial product carries one offset; items are enumerated layer by
  // layer, so the multiset of offsets doubles as the item list.
  std::vector<std::int64_t> items{0};
  std::int64_t dilation = 1;
  for (std::size_t m = 0; m < kernel_sizes.size(); ++m) {
    const int half = (kernel_sizes[m] - 1) / 2;
    std::vector<std::int64_t> next;
    next.reserve(items.size() * kernel_sizes[m]);
    for (std::int64_t base : items)
      for (int d = -half; d <= half; ++d) next.push_back(base + d * dilation);
    items = std::move(next);
    dilation *= strides[m];
  }

  TapExpansion exp;
  exp.total_items = static_cast<std::int64_t>(items.size());
  for (std::int64_t o : items) ++exp.counts[o];
  return exp;
}

Rational locality_ratio(const TapExpansion& exp, int window) {
  if (window < 0) throw ValueError("locality_ratio: window must be >= 0");
  if (exp.counts.empty()) throw ValueError("locality_ratio: empty expansion");
  std::int64_t inside = 0, total = 0;
  for (const auto& [offset, count] : exp.counts) {
    total += count;
    if (std::abs(offset) <= window) inside += count;
  }
  const std::int64_t g = std::gcd(inside, total);
  return Rational{inside / g, total / g};
}

}  // namespace pidnet::pid
