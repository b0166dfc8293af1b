#pragma once

// Robust aggregation rules, resampling preprocessing, and the randomized pool.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixtailor/core.hpp"

namespace mixtailor {

enum class AggKind { Mean, CoordMedian, TrimmedMean, GeneralizedKrum, GeomMedian, Bulyan };

struct AggregatorSpec {
    AggKind kind = AggKind::Mean;
    double p = 2.0;    // distance norm for Krum-like rules
    int trim_f = 0;    // TrimmedMean
    std::shared_ptr<const AggregatorSpec> bulyan_select;
    std::shared_ptr<const AggregatorSpec> bulyan_aggregate;
    int resample_s = 1;  // 1 = no resampling

    std::string describe() const;
};

struct PoolSpec {
    std::vector<AggregatorSpec> members;  // selected uniformly, probability 1/M
};

struct AggregationOutcome {
    GradVec result;
    int chosen_member = 0;                 // pool index; 0 for deterministic rules
    std::optional<int> selected_worker;    // Krum-like rules
};

GradVec agg_mean(std::span<const GradVec> updates);
GradVec agg_coord_median(std::span<const GradVec> updates);
GradVec agg_trimmed_mean(std::span<const GradVec> updates, int trim_f);

// Generalized Krum: for each worker i, score = sum over the n-f-2 closest
// others j of ||G_i - G_j||_p^2. Returns the argmin worker (ties by index).
AggregationOutcome agg_generalized_krum(std::span<const GradVec> updates, PNorm p, int f);

// The n-f-2 nearest neighbor index sets used by the Krum score (test hook
// for the neighbor cardinality bounds).
std::vector<std::vector<int>> krum_neighbor_sets(std::span<const GradVec> updates,
                                                 PNorm p, int f);

// Smoothed Weiszfeld iteration.
GradVec agg_geom_median(std::span<const GradVec> updates, double tol = 1e-7,
                        int max_iters = 100);

GradVec agg_bulyan(std::span<const GradVec> updates, int f,
                   const AggregatorSpec& select, const AggregatorSpec& aggregate);

// Returns n vectors, each the average of s inputs; no input used more than s
// times overall. s=1 returns the inputs unchanged.
std::vector<GradVec> resample(std::span<const GradVec> updates, int s, SeededRng& rng);

// Throws InvalidInput when the rule's preconditions fail for (n, f).
void validate_aggregator(const AggregatorSpec& spec, int n, int f);
// Throws ConfigError when any member is infeasible (fail fast, before training).
void validate_pool(const PoolSpec& pool, int n, int f);

// Dispatch one rule, applying its resample_s preprocessing first.
AggregationOutcome apply_aggregator(const AggregatorSpec& spec,
                                    std::span<const GradVec> updates, int f,
                                    SeededRng* resample_rng = nullptr);

// Draws a member uniformly with the server stream and applies it.
AggregationOutcome agg_mixtailor(std::span<const GradVec> updates, const PoolSpec& pool,
                                 int f, SeededRng& server_rng);

// The 64-member pool: 16 comed, 16 generalized Krum, 16 geometric median,
// 16 Bulyan variants cycling select/aggregate phases, p uniform in [1, 16].
PoolSpec build_paper_pool(SeededRng& rng);

}  // namespace mixtailor
