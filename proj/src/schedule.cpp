#include "eastkcm/schedule.hpp"

#include <string>

namespace eastkcm {

EpochSchedule make_schedule(double q, int max_epoch) {
  if (!(q > 0.0 && q <= 0.5)) throw Error("q must lie in (0, 1/2]");
  if (max_epoch < 1) throw Error("max epoch must be >= 1");
  EpochSchedule s;
  s.q = q;
  s.max_epoch = max_epoch;
  s.epsilon = 1.0 / (8.0 * max_epoch);
  const double eps = s.epsilon;
  const double inv_q = 1.0 / q;

  for (int n = 0; n <= max_epoch; ++n) {
    if (n == 0)
      s.window.push_back(std::pow(q, (1.0 - eps) / 2.0));
    else if (n == 1)
      s.window.push_back(std::pow(inv_q, 3.0 * eps));
    else
      s.window.push_back(std::pow(inv_q, (n - 1) * (1.0 + 3.0 * eps)));
  }
  for (int n = 0; n <= max_epoch + 1; ++n) {
    if (n == 0) {
      s.scale.push_back(1.0);
      s.active_start.push_back(0.0);
      s.active_end.push_back(std::pow(inv_q, eps));
    } else {
      const double tn = std::pow(inv_q, n);
      s.scale.push_back(tn);
      s.active_start.push_back(std::pow(tn, 1.0 - eps));
      s.active_end.push_back(std::pow(tn, 1.0 + eps));
    }
  }
  for (int n = 1; n <= max_epoch; ++n) {
    if (!(s.active_end[n - 1] < s.active_start[n]))
      throw Error("epoch windows overlap: t_" + std::to_string(n - 1) + "^+ >= t_" + std::to_string(n) + "^-");
  }
  return s;
}

int EpochSchedule::epoch_at(double t) const {
  if (!(t >= 0.0) || t > active_start.back()) throw Error("wall time outside [0, t_{N+1}^-]");
  int n = 0;
  while (n + 1 < static_cast<int>(active_start.size()) && t >= active_start[n + 1]) ++n;
  return n;
}

}  // namespace eastkcm
