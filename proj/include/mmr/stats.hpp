#pragma once

#include <vector>

namespace mmr {

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

// Student's paired t-test over per-query metric values matched by position.
// t = mean(d) / (sd(d)/sqrt(n)) with the sample (n-1) standard deviation;
// the two-sided p comes from the t distribution with n-1 degrees of freedom.
// All-zero differences give (0, 1); zero variance with nonzero mean is
// decisive and gives (+/-inf, 0).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided tail probability of Student's t with df degrees of freedom,
// via the regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

// I_x(a, b), continued-fraction evaluation (absolute tolerance 1e-10).
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace mmr
