#include "hdrfuse/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hdrfuse {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454836;

void require_finite_nonneg(double x, const char *name) {
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::domain_error(std::string(name) + " must be finite and >= 0");
}

// log(n!) - log(sqrt(2 pi n) (n/e)^n), the Stirling series remainder.
// Direct lgamma evaluation is accurate for small n; the asymptotic
// series takes over where its truncation error drops below 1 ulp.
double stirlerr(double n) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  if (n < 16.0)
    return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n -
           0.5 * kLogTwoPi;
  double nn = n * n;
  if (n > 500.0)
    return (s0 - s1 / nn) / n;
  if (n > 80.0)
    return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35.0)
    return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// Binomial deviance x*log(x/np) + np - x for x, np > 0, evaluated by a
// series in (x-np)/(x+np) when x is near np so the cancellation between
// the log term and np - x never surfaces.
double bd0(double x, double np) {
  if (std::fabs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    double v2 = v * v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v2;
      double s1 = s + ej / (2.0 * j + 1.0);
      if (s1 == s)
        return s1;
      s = s1;
    }
  }
  return x * std::log(x / np) + np - x;
}

// log pmf of Poisson(lambda) at n, for n >= 0 and lambda > 0, in the
// saddle-point form. Every term is O(1) relative to the result, so the
// absolute error stays near machine precision even when n and lambda
// are both huge and nearly equal.
double log_poisson_pmf_core(double n, double lambda) {
  if (n == 0.0)
    return -lambda;
  return -stirlerr(n) - bd0(n, lambda) - 0.5 * (kLogTwoPi + std::log(n));
}

// log P(a, x) with P the regularized lower incomplete gamma function,
// for a >= 1, x > 0. Series expansion when x < a + 1; otherwise P is
// O(1) and is recovered from the Lentz continued fraction for Q(a, x).
// Both branches share the Poisson pmf prefactor:
//   x^a e^-x / Gamma(a+1) = pmf(a; x).
double log_gamma_p(double a, double x) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int max_iter = 10000000;

  if (x < a + 1.0) {
    // P(a,x) = pmf(a; x) * sum_{n>=0} x^n / ((a+1)...(a+n)); the sum is
    // >= 1 and its terms decay geometrically once n exceeds x - a.
    double ap = a;
    double del = 1.0;
    double sum = 1.0;
    for (int i = 0; i < max_iter; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (del < sum * eps)
        return log_poisson_pmf_core(a, x) + std::log(sum);
    }
    throw std::runtime_error("log_gamma_p: series failed to converge");
  }

  // Q(a,x) = pmf(a; x) * a * CF; here x >= a + 1 so Q <= ~0.6 and
  // log1p(-Q) loses no precision.
  constexpr double fpmin = std::numeric_limits<double>::min() / eps;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < max_iter; ++i) {
    double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin)
      d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin)
      c = fpmin;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < eps) {
      double log_q = log_poisson_pmf_core(a, x) + std::log(a) + std::log(h);
      return std::log1p(-std::exp(log_q));
    }
  }
  throw std::runtime_error("log_gamma_p: continued fraction failed to converge");
}

} // namespace

double poisson_sf_log(double lambda, std::int64_t k) {
  require_finite_nonneg(lambda, "lambda");
  if (k < -1)
    throw std::domain_error("poisson_sf_log: k must be >= -1");
  if (k == -1)
    return 0.0;
  if (lambda == 0.0)
    return kNegInf;
  // Pr(N >= k+1) = P(k+1, lambda) for integer k >= 0.
  return log_gamma_p(double(k) + 1.0, lambda);
}

double truncated_poisson_mean(double lambda, std::int64_t k) {
  require_finite_nonneg(lambda, "lambda");
  if (k < -1)
    throw std::domain_error("truncated_poisson_mean: k must be >= -1");
  if (k == -1)
    return lambda;
  if (lambda == 0.0)
    throw std::domain_error(
        "truncated_poisson_mean: zero rate conditioned on a positive count");

  // E[N | N > k] = lambda * Pr(N >= k) / Pr(N >= k+1), assembled fully in
  // log space so the deep tail (lambda << k) never overflows the ratio.
  double log_sf_km1 = poisson_sf_log(lambda, k - 1);
  double log_sf_k = poisson_sf_log(lambda, k);
  double mean = std::exp(std::log(lambda) + log_sf_km1 - log_sf_k);

  // Analytic bounds: the conditional mean exceeds both the unconditional
  // mean and the truncation point. Enforcing them absorbs last-ulp
  // rounding and realizes the lambda -> 0 limit of exactly k + 1.
  double lower = std::max(lambda, double(k) + 1.0);
  return std::max(mean, lower);
}

double binomial_split_mean(double signal_rate, double background_rate,
                           double total) {
  require_finite_nonneg(signal_rate, "signal_rate");
  require_finite_nonneg(background_rate, "background_rate");
  require_finite_nonneg(total, "total");
  double rate_sum = signal_rate + background_rate;
  if (rate_sum == 0.0)
    throw std::domain_error(
        "binomial_split_mean: both component rates are zero");
  return signal_rate / rate_sum * total;
}

double poisson_log_pmf(double n, double lambda) {
  require_finite_nonneg(n, "n");
  require_finite_nonneg(lambda, "lambda");
  if (lambda == 0.0)
    return n == 0.0 ? 0.0 : kNegInf;
  return log_poisson_pmf_core(n, lambda);
}

} // namespace hdrfuse
