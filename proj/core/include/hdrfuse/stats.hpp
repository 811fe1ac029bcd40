#ifndef HDRFUSE_STATS_HPP
#define HDRFUSE_STATS_HPP

#include <cstdint>

namespace hdrfuse {

// log Pr(N >= k+1) for N ~ Poisson(lambda).
//
// k = -1 is allowed and gives log 1 = 0; lambda = 0 with k >= 0 gives
// -infinity. Evaluated through the regularized lower incomplete gamma
// function (series for lambda < k+1, continued fraction otherwise), kept
// in log space so deep tails stay finite long after the linear-space
// probability underflows.
double poisson_sf_log(double lambda, std::int64_t k);

// E[N | N > k] for N ~ Poisson(lambda).
//
// k = -1 removes the conditioning and returns lambda exactly. lambda = 0
// with k >= 0 is a domain error: the conditioning event has probability
// zero. The result always satisfies result >= max(lambda, k+1); when the
// tail ratio degenerates numerically the analytic deep-tail limit k+1 is
// returned.
double truncated_poisson_mean(double lambda, std::int64_t k);

// Expected share of `total` attributable to the first of two superposed
// Poisson sources with rates `signal_rate` and `background_rate`:
// signal_rate / (signal_rate + background_rate) * total. Both rates zero
// is a domain error (the split fraction is undefined).
double binomial_split_mean(double signal_rate, double background_rate,
                           double total);

// log pmf of Poisson(lambda) at integer count n >= 0. lambda = 0 gives
// 0 for n = 0 and -infinity otherwise.
double poisson_log_pmf(double n, double lambda);

} // namespace hdrfuse

#endif
