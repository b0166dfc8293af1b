#include "mixtailor/bounds.hpp"

#include <cmath>

namespace mixtailor {

namespace {

void require_krum_shape(int n, int f, int d) {
    if (f < 0) throw InvalidInput("bounds: f must be >= 0");
    if (d < 1) throw InvalidInput("bounds: d must be >= 1");
    if (n <= 2 * f + 2) throw InvalidInput("bounds: need n > 2f+2");
}

// One Monte Carlo trial: sample the honest panel, run the attack, aggregate.
struct TrialResult {
    GradVec output;
    GradVec sample_honest;  // one honest draw, the G witness
};

TrialResult run_trial(const AggregatorOrPool& agg, const GaussianPanelSpec& model,
                      const AttackSpec& attack, SeededRng& rng, SeededRng& adv_rng) {
    const int d = static_cast<int>(model.grad_mean.size());
    const double coord_sd = std::sqrt(model.sigma2 / d);
    const int honest_count = model.n - model.f;
    std::vector<GradVec> honest(honest_count, GradVec(d));
    for (auto& g : honest)
        for (int c = 0; c < d; ++c) g[c] = model.grad_mean[c] + coord_sd * rng.normal();

    AdversaryView view;
    view.honest_gradients = honest;
    view.rng = &adv_rng;
    if (const auto* pool = std::get_if<PoolSpec>(&agg)) {
        view.pool_description = *pool;
    } else {
        view.pool_description = PoolSpec{{std::get<AggregatorSpec>(agg)}};
    }
    AttackOutcome atk = run_attack(attack, view, model.n, model.f);

    std::vector<GradVec> panel = std::move(atk.byzantine);
    const int f_eff = static_cast<int>(panel.size());
    panel.insert(panel.end(), honest.begin(), honest.end());

    AggregationOutcome out;
    if (const auto* pool = std::get_if<PoolSpec>(&agg)) {
        out = agg_mixtailor(panel, *pool, f_eff, rng);
    } else {
        out = apply_aggregator(std::get<AggregatorSpec>(agg), panel, f_eff, &rng);
    }
    return {std::move(out.result), std::move(honest[0])};
}

}  // namespace

double capital_lambda(int n, int f, int d, double p) {
    require_krum_shape(n, f, d);
    if (p < 1.0) throw InvalidInput("capital_lambda: p must be >= 1");
    double expo = (std::max(p, 2.0) - std::min(p, 2.0)) / p;
    double c = 1.0 + 2.0 * f / static_cast<double>(n - 2 * f - 2);
    return std::pow(static_cast<double>(d), expo) * c;
}

double iid_bias_bound(const BoundInputs& in) {
    if (in.sigma2 < 0.0) throw InvalidInput("iid_bias_bound: sigma2 must be >= 0");
    return 2.0 * in.sigma2 * (1.0 + capital_lambda(in.n, in.f, in.d, in.p));
}

double noniid_bias_bound(const BoundInputs& in) {
    if (in.sigma2 < 0.0 || in.delta2 < 0.0)
        throw InvalidInput("noniid_bias_bound: variances must be >= 0");
    double lambda = capital_lambda(in.n, in.f, in.d, in.p);
    double nf = static_cast<double>(in.n - in.f);
    double c1 = 6.0 * in.sigma2 +
                2.0 * (nf + 3.0 + 2.0 * nf / (in.n - 2 * in.f - 2)) * in.delta2;
    double c2 = 4.0 * in.sigma2 + 8.0 * nf * in.delta2;
    return c1 + c2 * lambda;
}

double mixtailor_sufficient_M(int q, double lambda_sup, double L, double beta_min) {
    if (q < 1) throw InvalidInput("mixtailor_sufficient_M: q must be >= 1");
    if (beta_min <= 0.0) throw InvalidInput("mixtailor_sufficient_M: beta_min must be > 0");
    return q * (1.0 + lambda_sup * L / beta_min);
}

McEstimate mc_resilience_margin(const AggregatorOrPool& agg,
                                const GaussianPanelSpec& model,
                                const AttackSpec& attack, int trials, SeededRng& rng) {
    if (trials < 100) throw InvalidInput("mc_resilience_margin: need trials >= 100");
    SeededRng adv_rng(rng.next_u64(), Stream::AttackSearch);
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
        TrialResult r = run_trial(agg, model, attack, rng, adv_rng);
        double v = dot(r.output, model.grad_mean);
        sum += v;
        sum_sq += v * v;
    }
    double mean = sum / trials;
    double var = std::max(0.0, sum_sq / trials - mean * mean);
    return {mean, std::sqrt(var / trials)};
}

double mc_moment_ratio(const AggregatorOrPool& agg, const GaussianPanelSpec& model,
                       const AttackSpec& attack, int r, int trials, SeededRng& rng) {
    if (r < 2 || r > 4) throw InvalidInput("mc_moment_ratio: r must be in {2,3,4}");
    if (trials < 100) throw InvalidInput("mc_moment_ratio: need trials >= 100");
    SeededRng adv_rng(rng.next_u64(), Stream::AttackSearch);
    double num = 0.0, den = 0.0;
    for (int t = 0; t < trials; ++t) {
        TrialResult tr = run_trial(agg, model, attack, rng, adv_rng);
        num += std::pow(l2norm(tr.output), r);
        den += std::pow(l2norm(tr.sample_honest), r);
    }
    if (den == 0.0) throw InvalidInput("mc_moment_ratio: degenerate honest norm");
    return num / den;
}

McBias mc_mean_output(const AggregatorOrPool& agg, const GaussianPanelSpec& model,
                      const AttackSpec& attack, int trials, SeededRng& rng) {
    if (trials < 100) throw InvalidInput("mc_mean_output: need trials >= 100");
    SeededRng adv_rng(rng.next_u64(), Stream::AttackSearch);
    const int d = static_cast<int>(model.grad_mean.size());
    GradVec sum(d, 0.0), sum_sq(d, 0.0);
    for (int t = 0; t < trials; ++t) {
        TrialResult r = run_trial(agg, model, attack, rng, adv_rng);
        for (int c = 0; c < d; ++c) {
            sum[c] += r.output[c];
            sum_sq[c] += r.output[c] * r.output[c];
        }
    }
    McBias out;
    out.mean_output.resize(d);
    double var_total = 0.0;
    for (int c = 0; c < d; ++c) {
        out.mean_output[c] = sum[c] / trials;
        double var = std::max(0.0, sum_sq[c] / trials - out.mean_output[c] * out.mean_output[c]);
        var_total += var / trials;
    }
    out.l2_std_err = std::sqrt(var_total);
    return out;
}

Theorem3Report theorem3_condition_report(
    double R, std::span<const GradVec> probe_points,
    const std::function<GradVec(const GradVec&)>& grad_fn, const Theorem3Inputs& in) {
    if (probe_points.empty()) throw InvalidInput("theorem3_condition_report: empty grid");
    Theorem3Report rep;
    bool first = true;
    for (const auto& w : probe_points) {
        double wn2 = dot(w, w);
        if (wn2 < R)
            throw InvalidInput("theorem3_condition_report: probe point with |w|^2 < R");
        GradVec g = grad_fn(w);
        double gn = l2norm(g);
        double wn = std::sqrt(wn2);
        double cosine = (gn == 0.0 || wn == 0.0) ? 1.0 : dot(w, g) / (wn * gn);
        if (first || cosine < rep.min_cosine) {
            first = false;
            rep.min_cosine = cosine;
        }
    }
    double bound = noniid_bias_bound(in.bound);
    rep.margin = in.inf_EU_norm2 + in.inf_gradF_norm2 - bound - in.beta;
    rep.cosine_ok = rep.min_cosine >= in.cos_theta;
    rep.margin_ok = rep.margin >= 0.0;
    return rep;
}

ScheduleCheck check_schedule(LrSchedule sched) {
    switch (sched) {
        case LrSchedule::Constant:
            return {true, false};  // sum c = inf, sum c^2 = inf
        case LrSchedule::InverseT:
            return {true, true};  // harmonic diverges, sum 1/t^2 converges
    }
    return {false, false};
}

}  // namespace mixtailor
