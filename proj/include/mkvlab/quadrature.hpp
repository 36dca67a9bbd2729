#pragma once

#include <cmath>

namespace mkvlab {

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive composite Simpson rule on [a, b] with absolute tolerance `tol`.
/// The interval is pre-split into `panels` pieces so that narrow features
/// are not missed by the first coarse estimate.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-9, int panels = 16,
                        int max_depth = 40) {
  double total = 0.0;
  const double h = (b - a) / panels;
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * h;
    const double hi = (i + 1 == panels) ? b : lo + h;
    const double mid = 0.5 * (lo + hi);
    const double flo = f(lo), fhi = f(hi), fmid = f(mid);
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    total += detail::simpson_step(f, lo, flo, hi, fhi, mid, fmid, whole, tol / panels, max_depth);
  }
  return total;
}

}  // namespace mkvlab
