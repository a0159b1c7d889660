#pragma once

namespace ldaf {

/// Standard normal CDF, via erfc so the lower tail keeps full relative accuracy.
double gauss_cdf(double x) noexcept;

/// Inverse standard normal CDF on (0, 1). Wichura's AS241 rational
/// approximation followed by one Newton step; throws outside the open interval.
double gauss_icdf(double u);

}  // namespace ldaf
