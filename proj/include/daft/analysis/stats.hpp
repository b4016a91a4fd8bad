#pragma once

#include <span>

namespace daft::analysis {

/// Value plus a flag raised when the statistic was defined by convention
/// (zero variance, identical series).
struct FlaggedValue {
  double value = 0.0;
  bool degenerate = false;
};

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> x);

/// Pearson correlation; 0 with the degenerate flag when either series is constant.
FlaggedValue pearson(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based), ties sharing the mean of their positions.
void average_ranks(std::span<const double> x, std::span<double> ranks);

/// Pearson correlation of average ranks.
FlaggedValue spearman(std::span<const double> u, std::span<const double> v);

/// Regularized incomplete beta I_x(a, b) via the continued fraction.
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

/// Two-sided paired t-test on per-seed metrics a[i], b[i].
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace daft::analysis
