#include "mixtailor/attacks.hpp"

#include <cmath>
#include <sstream>

namespace mixtailor {

namespace {

std::vector<GradVec> make_panel(std::span<const GradVec> byzantine,
                                std::span<const GradVec> honest) {
    std::vector<GradVec> panel;
    panel.reserve(byzantine.size() + honest.size());
    panel.insert(panel.end(), byzantine.begin(), byzantine.end());
    panel.insert(panel.end(), honest.begin(), honest.end());
    return panel;
}

}  // namespace

std::string AttackSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case AttackKind::None: return "none";
        case AttackKind::EpsilonReverse:
            os << "epsilon_reverse(eps=" << format_real(epsilon) << ")";
            break;
        case AttackKind::PartialKnowledge:
            os << "partial_knowledge(eps=" << format_real(epsilon) << ",k=" << k << ")";
            break;
        case AttackKind::RandomEpsilon:
            os << "random_epsilon(|set|=" << epsilon_set.size() << ")";
            break;
        case AttackKind::Adaptive:
            os << "adaptive(|set|=" << epsilon_set.size() << ")";
            break;
        case AttackKind::MinMaxPool:
            os << "minmax_pool(|grid|=" << lambda_grid.size() << ")";
            break;
        case AttackKind::ALittle:
            os << "a_little(z=" << format_real(z) << ")";
            break;
    }
    return os.str();
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    grid.reserve(25);
    for (int i = 0; i < 25; ++i)
        grid.push_back(std::pow(10.0, -2.0 + 4.0 * i / 24.0));
    return grid;
}

std::vector<GradVec> attack_epsilon_reverse(const AdversaryView& view, int f,
                                            double epsilon) {
    if (view.honest_gradients.empty())
        throw InvalidInput("attack_epsilon_reverse: empty honest view");
    if (epsilon <= 0.0) throw InvalidInput("attack_epsilon_reverse: epsilon must be > 0");
    if (f < 1) throw InvalidInput("attack_epsilon_reverse: f must be >= 1");
    GradVec b = scale(agg_mean(view.honest_gradients), -epsilon);
    return std::vector<GradVec>(static_cast<std::size_t>(f), b);
}

std::vector<GradVec> attack_partial_knowledge(const AdversaryView& view_k, int n,
                                              int f, double epsilon) {
    const int known = static_cast<int>(view_k.honest_gradients.size());  // k - f
    if (known < 1) throw InvalidInput("attack_partial_knowledge: need k > f");
    const int k = known + f;
    if (k > n) throw InvalidInput("attack_partial_knowledge: k must be <= n");
    GradVec fill = agg_mean(view_k.honest_gradients);
    // filled honest panel: the known gradients plus n-k copies of their mean
    std::vector<GradVec> filled = view_k.honest_gradients;
    for (int i = 0; i < n - k; ++i) filled.push_back(fill);
    AdversaryView filled_view{std::move(filled), view_k.pool_description, view_k.rng};
    return attack_epsilon_reverse(filled_view, f, epsilon);
}

std::vector<GradVec> attack_random_epsilon(const AdversaryView& view, int f,
                                           std::span<const double> epsilon_set,
                                           SeededRng& rng) {
    if (epsilon_set.empty()) throw InvalidInput("attack_random_epsilon: empty epsilon set");
    double eps = epsilon_set[rng.uniform_index(epsilon_set.size())];
    return attack_epsilon_reverse(view, f, eps);
}

AdaptiveResult attack_adaptive(const AdversaryView& view, int f,
                               std::span<const double> epsilon_set, int n,
                               AttackCost* cost) {
    if (!view.pool_description)
        throw InvalidInput("attack_adaptive: pool description required");
    if (epsilon_set.empty()) throw InvalidInput("attack_adaptive: empty epsilon set");
    if (!view.rng) throw InvalidInput("attack_adaptive: adversary rng required");
    const PoolSpec& pool = *view.pool_description;
    const AggregatorSpec& agg =
        pool.members[view.rng->uniform_index(pool.members.size())];
    GradVec clean_mean = agg_mean(view.honest_gradients);

    AdaptiveResult best;
    bool first = true;
    double best_dot = 0.0;
    for (double eps : epsilon_set) {
        auto byz = attack_epsilon_reverse(view, f, eps);
        auto panel = make_panel(byz, view.honest_gradients);
        AggregationOutcome sim = apply_aggregator(agg, panel, f, view.rng);
        if (cost) cost->aggregator_evaluations += 1;
        double d = dot(sim.result, clean_mean);
        if (first || d < best_dot) {
            first = false;
            best_dot = d;
            best.byzantine = std::move(byz);
            best.chosen_epsilon = eps;
        }
    }
    (void)n;
    return best;
}

MinMaxResult attack_minmax_pool(const AdversaryView& view, int f,
                                std::span<const double> lambda_grid,
                                AttackCost* cost) {
    if (!view.pool_description)
        throw InvalidInput("attack_minmax_pool: pool description required");
    if (lambda_grid.empty()) throw InvalidInput("attack_minmax_pool: empty lambda grid");
    const PoolSpec& pool = *view.pool_description;
    const int n = static_cast<int>(view.honest_gradients.size()) + f;
    validate_pool(pool, n, f);

    GradVec honest_sum(view.honest_gradients[0].size(), 0.0);
    for (const auto& g : view.honest_gradients) add_in_place(honest_sum, g);
    GradVec clean_mean = scale(honest_sum, 1.0 / view.honest_gradients.size());

    MinMaxResult best;
    bool first = true;
    for (double lambda : lambda_grid) {
        GradVec b = scale(honest_sum, -lambda);
        std::vector<GradVec> byz(static_cast<std::size_t>(f), b);
        auto panel = make_panel(byz, view.honest_gradients);
        double xi = 0.0;
        bool m_first = true;
        for (const auto& member : pool.members) {
            AggregationOutcome out = apply_aggregator(member, panel, f, view.rng);
            if (cost) cost->aggregator_evaluations += 1;
            double d = dot(out.result, clean_mean);
            if (m_first || d > xi) {
                m_first = false;
                xi = d;
            }
        }
        if (first || xi < best.achieved_xi) {
            first = false;
            best.achieved_xi = xi;
            best.chosen_lambda = lambda;
            best.byzantine = std::move(byz);
        }
    }
    return best;
}

std::vector<GradVec> attack_a_little(const AdversaryView& view, int f, int n, double z) {
    (void)n;
    const auto& honest = view.honest_gradients;
    if (honest.size() < 2) throw InvalidInput("attack_a_little: need >= 2 honest gradients");
    const std::size_t d = honest[0].size();
    GradVec mean = agg_mean(honest);
    GradVec b(d);
    for (std::size_t c = 0; c < d; ++c) {
        double var = 0.0;
        for (const auto& g : honest) var += (g[c] - mean[c]) * (g[c] - mean[c]);
        var /= static_cast<double>(honest.size());  // population std
        b[c] = mean[c] - z * std::sqrt(var);
    }
    return std::vector<GradVec>(static_cast<std::size_t>(f), b);
}

VerifyResult verify_attack(std::span<const GradVec> byzantine,
                           std::span<const GradVec> honest,
                           const AggregatorSpec& agg, AttackCost* cost,
                           SeededRng* resample_rng) {
    if (honest.empty()) throw InvalidInput("verify_attack: empty honest panel");
    auto panel = make_panel(byzantine, honest);
    const int f = static_cast<int>(byzantine.size());
    validate_aggregator(agg, static_cast<int>(panel.size()), f);
    AggregationOutcome out = apply_aggregator(agg, panel, f, resample_rng);
    if (cost) cost->aggregator_evaluations += 1;
    double d = dot(out.result, agg_mean(honest));
    return VerifyResult{d, d < 0.0};
}

AttackOutcome run_attack(const AttackSpec& spec, const AdversaryView& view, int n,
                         int f, AttackCost* cost) {
    switch (spec.kind) {
        case AttackKind::None:
            return {{}, 0.0};
        case AttackKind::EpsilonReverse:
            return {attack_epsilon_reverse(view, f, spec.epsilon), spec.epsilon};
        case AttackKind::PartialKnowledge: {
            // restrict the view to the first k-f honest gradients
            if (spec.k <= f) throw InvalidInput("partial_knowledge: need k > f");
            AdversaryView vk = view;
            if (static_cast<int>(vk.honest_gradients.size()) > spec.k - f)
                vk.honest_gradients.resize(spec.k - f);
            return {attack_partial_knowledge(vk, n, f, spec.epsilon), spec.epsilon};
        }
        case AttackKind::RandomEpsilon: {
            if (!view.rng) throw InvalidInput("random_epsilon: adversary rng required");
            if (spec.epsilon_set.empty())
                throw InvalidInput("random_epsilon: empty epsilon set");
            double eps = spec.epsilon_set[view.rng->uniform_index(spec.epsilon_set.size())];
            return {attack_epsilon_reverse(view, f, eps), eps};
        }
        case AttackKind::Adaptive: {
            auto r = attack_adaptive(view, f, spec.epsilon_set, n, cost);
            return {std::move(r.byzantine), r.chosen_epsilon};
        }
        case AttackKind::MinMaxPool: {
            auto grid = spec.lambda_grid.empty() ? default_lambda_grid() : spec.lambda_grid;
            auto r = attack_minmax_pool(view, f, grid, cost);
            return {std::move(r.byzantine), r.chosen_lambda};
        }
        case AttackKind::ALittle:
            return {attack_a_little(view, f, n, spec.z), spec.z};
    }
    throw InvalidInput("run_attack: unknown attack kind");
}

}  // namespace mixtailor
