#pragma once

// Closed-form calculators for the bias bounds and the sufficient pool-size
// condition, plus Monte Carlo estimators that check them.

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "mixtailor/aggregators.hpp"
#include "mixtailor/attacks.hpp"
#include "mixtailor/core.hpp"

namespace mixtailor {

struct BoundInputs {
    int n = 0;
    int f = 0;
    int d = 1;
    double p = 2.0;
    double sigma2 = 0.0;      // per-worker gradient variance bound
    double delta2 = 0.0;      // inter-client heterogeneity
    double L = 1.0;           // bound on the gradient norm
    double lambda_sup = 0.0;  // sup norm of compromised-rule outputs
    double beta_min = 1.0;    // min resilience margin over surviving rules
    int q = 0;                // number of compromised rules
    int M = 0;                // pool size
};

// d^((max(p,2)-min(p,2))/p) * (1 + 2f/(n-2f-2))
double capital_lambda(int n, int f, int d, double p);

// 2*sigma2*(1 + Lambda)
double iid_bias_bound(const BoundInputs& in);

// C1 + C2*Lambda with C1 = 6 sigma2 + 2(n-f+3+2(n-f)/(n-2f-2)) delta2,
// C2 = 4 sigma2 + 8(n-f) delta2
double noniid_bias_bound(const BoundInputs& in);

// q*(1 + lambda*L/beta_min); a pool of size M strictly above this satisfies
// the sufficient condition M/q > 1 + lambda*L/beta_min.
double mixtailor_sufficient_M(int q, double lambda_sup, double L, double beta_min);

// Synthetic Gaussian panel: each honest gradient is grad_mean plus iid noise
// with per-coordinate variance sigma2/d, so the total per-worker variance
// E||V - grad_mean||^2 equals sigma2.
struct GaussianPanelSpec {
    GradVec grad_mean;  // plays the role of the true gradient
    double sigma2 = 1.0;
    int n = 12;
    int f = 0;
};

struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
};

using AggregatorOrPool = std::variant<AggregatorSpec, PoolSpec>;

// Monte Carlo estimate of E[dot(U, grad_mean)]; resilient when
// mean - 3*std_err > 0.
McEstimate mc_resilience_margin(const AggregatorOrPool& agg,
                                const GaussianPanelSpec& model,
                                const AttackSpec& attack, int trials, SeededRng& rng);

// Estimated ratio E||U||^r / E||G||^r for r in {2,3,4}.
double mc_moment_ratio(const AggregatorOrPool& agg, const GaussianPanelSpec& model,
                       const AttackSpec& attack, int r, int trials, SeededRng& rng);

// Monte Carlo estimate of mean(U) over trials, for bias-bound checks; also
// returns the per-coordinate standard error aggregated in l2.
struct McBias {
    GradVec mean_output;
    double l2_std_err = 0.0;  // sqrt(sum of per-coordinate variances / trials)
};

McBias mc_mean_output(const AggregatorOrPool& agg, const GaussianPanelSpec& model,
                      const AttackSpec& attack, int trials, SeededRng& rng);

// Diagnostic report on the almost-sure convergence hypotheses; does not
// claim convergence, only evaluates them numerically.
struct Theorem3Report {
    double min_cosine = 0.0;    // min over probe points of w.grad/(|w||grad|)
    double margin = 0.0;        // inf|E[U]|^2 + inf|gradF|^2 - (C1+C2*Lambda) - beta
    bool cosine_ok = false;     // min_cosine >= cos_theta
    bool margin_ok = false;     // margin >= 0
};

struct Theorem3Inputs {
    double inf_EU_norm2 = 0.0;
    double inf_gradF_norm2 = 0.0;
    double beta = 0.0;
    double cos_theta = 0.0;
    BoundInputs bound;
};

Theorem3Report theorem3_condition_report(
    double R, std::span<const GradVec> probe_points,
    const std::function<GradVec(const GradVec&)>& grad_fn, const Theorem3Inputs& in);

// Schedule hypotheses: sum eta_t = inf and sum eta_t^2 < inf.
// Constant eta fails the second; eta_t = c/t passes both.
struct ScheduleCheck {
    bool sum_diverges = false;
    bool sum_sq_converges = false;
};

enum class LrSchedule { Constant, InverseT };

ScheduleCheck check_schedule(LrSchedule sched);

}  // namespace mixtailor
