#pragma once

#include <cmath>
#include <vector>

#include "eastkcm/common.hpp"

namespace eastkcm {

/// Class of a domain length: 0 for d = 1, otherwise the n with
/// 2^(n-1) + 1 <= d <= 2^n.
inline int class_of(long long d) {
  if (d <= 0) throw Error("domain length must be >= 1");
  if (d == 1) return 0;
  int n = 0;
  for (unsigned long long v = static_cast<unsigned long long>(d - 1); v != 0; v >>= 1) ++n;
  return n;
}

/// Smallest and largest length in class n.
inline long long class_min(int n) { return n == 0 ? 1 : (1LL << (n - 1)) + 1; }
inline long long class_max(int n) { return 1LL << n; }

/// Epoch time scales for vacancy probability q and maximal epoch N, with
/// ε = 1/(8N):
///   T_0 = q^((1-ε)/2), T_1 = q^(-3ε), T_n = q^(-(n-1)(1+3ε))  (n >= 2)
///   t_0 = 1, t_0^- = 0, t_0^+ = q^-ε, t_n = q^-n, t_n^± = t_n^(1±ε).
/// Wall-time quantities are stored for n = 0..N+1 so that the range of the
/// epoch map [0, t_{N+1}^-] is known.
struct EpochSchedule {
  double q = 0.0;
  int max_epoch = 0;
  double epsilon = 0.0;
  std::vector<double> window;     // T_n, n = 0..N
  std::vector<double> scale;      // t_n, n = 0..N+1
  std::vector<double> active_start;  // t_n^-
  std::vector<double> active_end;    // t_n^+

  /// Epoch index n(t) with t in [t_n^-, t_{n+1}^-).
  int epoch_at(double t) const;
};

EpochSchedule make_schedule(double q, int max_epoch);

}  // namespace eastkcm
