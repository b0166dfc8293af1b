#pragma once

// Informed-adversary strategy suite and attack verification.

#include <optional>
#include <span>
#include <vector>

#include "mixtailor/aggregators.hpp"
#include "mixtailor/core.hpp"

namespace mixtailor {

enum class AttackKind {
    None,
    EpsilonReverse,
    PartialKnowledge,
    RandomEpsilon,
    Adaptive,
    MinMaxPool,
    ALittle,
};

struct AttackSpec {
    AttackKind kind = AttackKind::None;
    double epsilon = 10.0;                // EpsilonReverse / PartialKnowledge
    std::vector<double> epsilon_set;      // Adaptive / RandomEpsilon
    int k = 0;                            // PartialKnowledge: known honest workers, f < k <= n
    double z = 1.0;                       // ALittle
    std::vector<double> lambda_grid;      // MinMaxPool

    std::string describe() const;
};

// 25 log-spaced points in [1e-2, 1e2].
std::vector<double> default_lambda_grid();

struct AttackCost {
    long long aggregator_evaluations = 0;
    long long elementary_flops_estimate = 0;
};

// What the adversary sees this round. Deliberately holds no reference to the
// server's pool-draw stream or its current choice.
struct AdversaryView {
    std::vector<GradVec> honest_gradients;
    std::optional<PoolSpec> pool_description;
    SeededRng* rng = nullptr;  // adversary's own stream
};

std::vector<GradVec> attack_epsilon_reverse(const AdversaryView& view, int f,
                                            double epsilon);

// view_k.honest_gradients holds the k-f known honest gradients; unknown slots
// are filled with their mean before computing the reverse direction.
std::vector<GradVec> attack_partial_knowledge(const AdversaryView& view_k, int n,
                                              int f, double epsilon);

std::vector<GradVec> attack_random_epsilon(const AdversaryView& view, int f,
                                           std::span<const double> epsilon_set,
                                           SeededRng& rng);

struct AdaptiveResult {
    std::vector<GradVec> byzantine;
    double chosen_epsilon = 0.0;
};

// Draws one aggregator from the known pool with the adversary's own stream,
// then picks the epsilon whose simulated aggregate has the smallest dot
// product with the clean mean.
AdaptiveResult attack_adaptive(const AdversaryView& view, int f,
                               std::span<const double> epsilon_set, int n,
                               AttackCost* cost = nullptr);

struct MinMaxResult {
    std::vector<GradVec> byzantine;
    double achieved_xi = 0.0;
    double chosen_lambda = 0.0;
};

// Restricted min-max grid attack: Byzantine vectors -lambda * sum(honest),
// xi(lambda) = max over pool members of dot(AGG output, mean(honest)).
// A negative achieved_xi certifies a pool-wide attack direction.
MinMaxResult attack_minmax_pool(const AdversaryView& view, int f,
                                std::span<const double> lambda_grid,
                                AttackCost* cost = nullptr);

// Per coordinate: mean(honest) - z * population std(honest).
std::vector<GradVec> attack_a_little(const AdversaryView& view, int f, int n, double z);

struct VerifyResult {
    double dot_with_clean_direction = 0.0;
    bool success = false;  // dot < 0
};

VerifyResult verify_attack(std::span<const GradVec> byzantine,
                           std::span<const GradVec> honest,
                           const AggregatorSpec& agg, AttackCost* cost = nullptr,
                           SeededRng* resample_rng = nullptr);

// Round-level dispatch used by the training harness. Returns the f Byzantine
// vectors for the configured attack (empty for AttackKind::None) plus the
// epsilon/lambda actually used.
struct AttackOutcome {
    std::vector<GradVec> byzantine;
    double attack_param = 0.0;
};

AttackOutcome run_attack(const AttackSpec& spec, const AdversaryView& view, int n,
                         int f, AttackCost* cost = nullptr);

}  // namespace mixtailor
