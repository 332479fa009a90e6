#pragma once

namespace vergescope::stats {

/// I_x(a, b), the regularized incomplete beta function, for a, b > 0 and
/// x in [0, 1]. Continued-fraction evaluation (modified Lentz).
double regularized_incomplete_beta(double a, double b, double x);

/// P(F <= x) for the F distribution with (df1, df2) degrees of freedom.
double f_cdf(double x, double df1, double df2);

/// P(F > x); evaluated directly rather than as 1 - cdf so small p-values keep
/// their relative precision.
double f_survival(double x, double df1, double df2);

}  // namespace vergescope::stats
