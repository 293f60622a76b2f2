#pragma once

namespace mclq::gaussian {

double pdf(double x);
/// Standard normal CDF through erfc, accurate in both tails.
double cdf(double x);
/// Upper tail 1 - cdf(x) without cancellation.
double sf(double x);
/// Inverse CDF for p in (0, 1).
double quantile(double p);

}  // namespace mclq::gaussian
