#include "mixtailor/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mixtailor {

namespace {

void require_equal_dims(std::span<const GradVec> updates, const char* what) {
    if (updates.empty()) throw InvalidInput(std::string(what) + ": empty input");
    const std::size_t d = updates[0].size();
    for (const auto& u : updates)
        if (u.size() != d) throw InvalidInput(std::string(what) + ": dimension mismatch");
}

double median_of(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Krum selection with the neighbor count clamped at zero, used inside
// Bulyan where the candidate set shrinks below the strict precondition.
int krum_select_relaxed(std::span<const GradVec> updates, PNorm p, int f,
                        std::vector<double>* scores_out = nullptr) {
    const int n = static_cast<int>(updates.size());
    const int neighbors = std::max(0, n - f - 2);
    auto dist = pairwise_distances(updates, p);
    int best = 0;
    double best_score = 0.0;
    std::vector<double> scores(n, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> row;
        row.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) row.push_back(dist[i][j]);
        std::sort(row.begin(), row.end());
        double s = 0.0;
        for (int j = 0; j < neighbors; ++j) s += row[j] * row[j];
        scores[i] = s;
        if (i == 0 || s < best_score) {
            best = i;
            best_score = s;
        }
    }
    if (scores_out) *scores_out = std::move(scores);
    return best;
}

// Per-coordinate application of a phase rule to a window of scalar values.
double aggregate_window(AggKind kind, std::vector<double> w) {
    switch (kind) {
        case AggKind::Mean:
        case AggKind::TrimmedMean:  // the window is already the trimmed set
            return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
        case AggKind::CoordMedian:
        case AggKind::GeomMedian:  // 1-dim geometric median = median
            return median_of(w);
        case AggKind::GeneralizedKrum: {
            // scalar Krum: value minimizing the sum of squared gaps to the others
            int best = 0;
            double best_score = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < w.size(); ++j)
                    if (j != i) s += (w[i] - w[j]) * (w[i] - w[j]);
                if (i == 0 || s < best_score) {
                    best = static_cast<int>(i);
                    best_score = s;
                }
            }
            return w[best];
        }
        case AggKind::Bulyan:
            throw InvalidInput("bulyan phase rule must not be bulyan");
    }
    throw InvalidInput("aggregate_window: unknown kind");
}

// One selection-phase application: output of the phase rule on the candidates.
GradVec phase_select_output(const AggregatorSpec& sel, std::span<const GradVec> cand, int f) {
    switch (sel.kind) {
        case AggKind::Mean:
            return agg_mean(cand);
        case AggKind::CoordMedian:
            return agg_coord_median(cand);
        case AggKind::GeomMedian:
            return agg_geom_median(cand);
        case AggKind::TrimmedMean:
            return agg_trimmed_mean(cand, std::min<int>(sel.trim_f,
                                                        (static_cast<int>(cand.size()) - 1) / 2));
        case AggKind::GeneralizedKrum: {
            int i = krum_select_relaxed(cand, PNorm{sel.p}, f);
            return cand[i];
        }
        case AggKind::Bulyan:
            throw InvalidInput("bulyan selection rule must not be bulyan");
    }
    throw InvalidInput("phase_select_output: unknown kind");
}

const char* kind_name(AggKind k) {
    switch (k) {
        case AggKind::Mean: return "mean";
        case AggKind::CoordMedian: return "comed";
        case AggKind::TrimmedMean: return "trimmed_mean";
        case AggKind::GeneralizedKrum: return "krum";
        case AggKind::GeomMedian: return "geomed";
        case AggKind::Bulyan: return "bulyan";
    }
    return "?";
}

}  // namespace

std::string AggregatorSpec::describe() const {
    std::ostringstream os;
    os << kind_name(kind);
    switch (kind) {
        case AggKind::GeneralizedKrum:
        case AggKind::GeomMedian:
        case AggKind::CoordMedian:
            os << "(p=" << format_real(p) << ")";
            break;
        case AggKind::TrimmedMean:
            os << "(trim_f=" << trim_f << ")";
            break;
        case AggKind::Bulyan:
            os << "(select=" << (bulyan_select ? bulyan_select->describe() : "?")
               << ",aggregate=" << (bulyan_aggregate ? bulyan_aggregate->describe() : "?")
               << ",p=" << format_real(p) << ")";
            break;
        case AggKind::Mean:
            break;
    }
    if (resample_s > 1) os << "+resample(s=" << resample_s << ")";
    return os.str();
}

GradVec agg_mean(std::span<const GradVec> updates) {
    require_equal_dims(updates, "agg_mean");
    GradVec r(updates[0].size(), 0.0);
    for (const auto& u : updates) add_in_place(r, u);
    return scale(r, 1.0 / static_cast<double>(updates.size()));
}

GradVec agg_coord_median(std::span<const GradVec> updates) {
    require_equal_dims(updates, "agg_coord_median");
    const std::size_t d = updates[0].size();
    GradVec r(d);
    std::vector<double> col(updates.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < updates.size(); ++i) col[i] = updates[i][c];
        r[c] = median_of(col);
    }
    return r;
}

GradVec agg_trimmed_mean(std::span<const GradVec> updates, int trim_f) {
    require_equal_dims(updates, "agg_trimmed_mean");
    const int n = static_cast<int>(updates.size());
    if (trim_f < 0) throw InvalidInput("agg_trimmed_mean: trim_f must be >= 0");
    if (n <= 2 * trim_f) throw InvalidInput("agg_trimmed_mean: need n > 2*trim_f");
    const std::size_t d = updates[0].size();
    GradVec r(d);
    std::vector<double> col(updates.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (int i = 0; i < n; ++i) col[i] = updates[i][c];
        std::sort(col.begin(), col.end());
        double s = 0.0;
        for (int i = trim_f; i < n - trim_f; ++i) s += col[i];
        r[c] = s / static_cast<double>(n - 2 * trim_f);
    }
    return r;
}

AggregationOutcome agg_generalized_krum(std::span<const GradVec> updates, PNorm p, int f) {
    require_equal_dims(updates, "agg_generalized_krum");
    const int n = static_cast<int>(updates.size());
    if (f < 0) throw InvalidInput("agg_generalized_krum: f must be >= 0");
    if (n <= 2 * f + 2) throw InvalidInput("agg_generalized_krum: need n > 2f+2");
    int i = krum_select_relaxed(updates, p, f);
    return AggregationOutcome{updates[i], 0, i};
}

std::vector<std::vector<int>> krum_neighbor_sets(std::span<const GradVec> updates,
                                                 PNorm p, int f) {
    require_equal_dims(updates, "krum_neighbor_sets");
    const int n = static_cast<int>(updates.size());
    if (n <= 2 * f + 2) throw InvalidInput("krum_neighbor_sets: need n > 2f+2");
    const int neighbors = n - f - 2;
    auto dist = pairwise_distances(updates, p);
    std::vector<std::vector<int>> out(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> idx;
        for (int j = 0; j < n; ++j)
            if (j != i) idx.push_back(j);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return dist[i][a] < dist[i][b]; });
        idx.resize(neighbors);
        out[i] = std::move(idx);
    }
    return out;
}

GradVec agg_geom_median(std::span<const GradVec> updates, double tol, int max_iters) {
    require_equal_dims(updates, "agg_geom_median");
    if (tol <= 0.0) throw InvalidInput("agg_geom_median: tol must be > 0");
    constexpr double kSmooth = 1e-8;
    GradVec z = agg_mean(updates);
    for (int it = 0; it < max_iters; ++it) {
        GradVec num(z.size(), 0.0);
        double denom = 0.0;
        for (const auto& u : updates) {
            double w = 1.0 / std::max(l2norm(sub(z, u)), kSmooth);
            add_in_place(num, u, w);
            denom += w;
        }
        GradVec next = scale(num, 1.0 / denom);
        double step = l2norm(sub(next, z));
        z = std::move(next);
        if (step < tol) break;
    }
    return z;
}

GradVec agg_bulyan(std::span<const GradVec> updates, int f,
                   const AggregatorSpec& select, const AggregatorSpec& aggregate) {
    require_equal_dims(updates, "agg_bulyan");
    const int n = static_cast<int>(updates.size());
    if (f < 0) throw InvalidInput("agg_bulyan: f must be >= 0");
    if (n < 4 * f + 3) throw InvalidInput("agg_bulyan: need n >= 4f+3");
    if (select.kind == AggKind::Bulyan || aggregate.kind == AggKind::Bulyan)
        throw InvalidInput("agg_bulyan: phase rules must not be bulyan");

    // selection phase: n-2f rounds, each moves the candidate closest (l2)
    // to the phase output into the selected multiset
    std::vector<GradVec> candidates(updates.begin(), updates.end());
    std::vector<GradVec> selected;
    const int theta = n - 2 * f;
    for (int round = 0; round < theta; ++round) {
        if (candidates.size() == 1) {  // f=0 drains the pool completely
            selected.push_back(candidates[0]);
            candidates.clear();
            continue;
        }
        GradVec ref = phase_select_output(select, candidates, f);
        int closest = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            double dd = l2norm(sub(candidates[i], ref));
            if (i == 0 || dd < best) {
                closest = static_cast<int>(i);
                best = dd;
            }
        }
        selected.push_back(candidates[closest]);
        candidates.erase(candidates.begin() + closest);
    }

    // aggregation phase: per coordinate, the theta-2f values closest to the
    // coordinate median, reduced by the aggregation-phase rule
    const int beta = theta - 2 * f;
    const std::size_t d = updates[0].size();
    GradVec r(d);
    std::vector<double> col(selected.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < selected.size(); ++i) col[i] = selected[i][c];
        std::vector<double> sorted = col;
        double med = median_of(sorted);
        std::vector<int> order(col.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return std::abs(col[a] - med) < std::abs(col[b] - med);
        });
        std::vector<double> window(beta);
        for (int i = 0; i < beta; ++i) window[i] = col[order[i]];
        r[c] = aggregate_window(aggregate.kind, std::move(window));
    }
    return r;
}

std::vector<GradVec> resample(std::span<const GradVec> updates, int s, SeededRng& rng) {
    require_equal_dims(updates, "resample");
    if (s < 1) throw InvalidInput("resample: s must be >= 1");
    const int n = static_cast<int>(updates.size());
    if (s == 1) return {updates.begin(), updates.end()};
    // each input index appears exactly s times among the n*s shuffled slots
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(n) * s);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < s; ++k) tokens.push_back(i);
    rng.shuffle(tokens);
    std::vector<GradVec> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        GradVec acc(updates[0].size(), 0.0);
        for (int k = 0; k < s; ++k) add_in_place(acc, updates[tokens[i * s + k]]);
        out.push_back(scale(acc, 1.0 / s));
    }
    return out;
}

void validate_aggregator(const AggregatorSpec& spec, int n, int f) {
    if (n < 1) throw InvalidInput("aggregator: need n >= 1");
    switch (spec.kind) {
        case AggKind::Mean:
        case AggKind::CoordMedian:
        case AggKind::GeomMedian:
            break;
        case AggKind::TrimmedMean:
            if (n <= 2 * spec.trim_f)
                throw InvalidInput("trimmed_mean: need n > 2*trim_f");
            break;
        case AggKind::GeneralizedKrum:
            if (n <= 2 * f + 2) throw InvalidInput("krum: need n > 2f+2");
            break;
        case AggKind::Bulyan:
            if (n < 4 * f + 3) throw InvalidInput("bulyan: need n >= 4f+3");
            if (!spec.bulyan_select || !spec.bulyan_aggregate)
                throw InvalidInput("bulyan: missing phase rules");
            if (spec.bulyan_select->kind == AggKind::Bulyan ||
                spec.bulyan_aggregate->kind == AggKind::Bulyan)
                throw InvalidInput("bulyan: phase rules must not be bulyan");
            break;
    }
    if (spec.p < 1.0) throw InvalidInput("aggregator: p must be >= 1");
    if (spec.resample_s < 1) throw InvalidInput("aggregator: resample_s must be >= 1");
}

void validate_pool(const PoolSpec& pool, int n, int f) {
    if (pool.members.empty()) throw ConfigError("pool: must have at least one member");
    for (std::size_t m = 0; m < pool.members.size(); ++m) {
        try {
            validate_aggregator(pool.members[m], n, f);
        } catch (const InvalidInput& e) {
            throw ConfigError("pool member " + std::to_string(m) + " (" +
                              pool.members[m].describe() + ") infeasible for n=" +
                              std::to_string(n) + ", f=" + std::to_string(f) + ": " +
                              e.what());
        }
    }
}

AggregationOutcome apply_aggregator(const AggregatorSpec& spec,
                                    std::span<const GradVec> updates, int f,
                                    SeededRng* resample_rng) {
    std::vector<GradVec> resampled;
    std::span<const GradVec> input = updates;
    if (spec.resample_s > 1) {
        if (!resample_rng)
            throw ConfigError("aggregator requires an RNG stream for resampling");
        resampled = resample(updates, spec.resample_s, *resample_rng);
        input = resampled;
    }
    switch (spec.kind) {
        case AggKind::Mean:
            return {agg_mean(input), 0, std::nullopt};
        case AggKind::CoordMedian:
            return {agg_coord_median(input), 0, std::nullopt};
        case AggKind::TrimmedMean:
            return {agg_trimmed_mean(input, spec.trim_f), 0, std::nullopt};
        case AggKind::GeneralizedKrum:
            return agg_generalized_krum(input, PNorm{spec.p}, f);
        case AggKind::GeomMedian:
            return {agg_geom_median(input), 0, std::nullopt};
        case AggKind::Bulyan:
            if (!spec.bulyan_select || !spec.bulyan_aggregate)
                throw InvalidInput("bulyan: missing phase rules");
            return {agg_bulyan(input, f, *spec.bulyan_select, *spec.bulyan_aggregate),
                    0, std::nullopt};
    }
    throw InvalidInput("apply_aggregator: unknown kind");
}

AggregationOutcome agg_mixtailor(std::span<const GradVec> updates, const PoolSpec& pool,
                                 int f, SeededRng& server_rng) {
    if (pool.members.empty()) throw ConfigError("mixtailor: empty pool");
    int m = static_cast<int>(server_rng.uniform_index(pool.members.size()));
    AggregationOutcome out = apply_aggregator(pool.members[m], updates, f, &server_rng);
    out.chosen_member = m;
    return out;
}

PoolSpec build_paper_pool(SeededRng& rng) {
    PoolSpec pool;
    pool.members.reserve(64);
    auto draw_p = [&] { return rng.uniform(1.0, 16.0); };
    for (int i = 0; i < 16; ++i) {
        AggregatorSpec s;
        s.kind = AggKind::CoordMedian;
        s.p = draw_p();
        pool.members.push_back(s);
    }
    for (int i = 0; i < 16; ++i) {
        AggregatorSpec s;
        s.kind = AggKind::GeneralizedKrum;
        s.p = draw_p();
        pool.members.push_back(s);
    }
    for (int i = 0; i < 16; ++i) {
        AggregatorSpec s;
        s.kind = AggKind::GeomMedian;
        s.p = draw_p();
        pool.members.push_back(s);
    }
    const AggKind phases[4] = {AggKind::GeneralizedKrum, AggKind::Mean,
                               AggKind::GeomMedian, AggKind::CoordMedian};
    for (int i = 0; i < 16; ++i) {
        AggregatorSpec s;
        s.kind = AggKind::Bulyan;
        s.p = draw_p();
        auto sel = std::make_shared<AggregatorSpec>();
        sel->kind = phases[i / 4];
        sel->p = s.p;
        auto agg = std::make_shared<AggregatorSpec>();
        agg->kind = phases[i % 4];
        agg->p = s.p;
        s.bulyan_select = sel;
        s.bulyan_aggregate = agg;
        pool.members.push_back(s);
    }
    return pool;
}

}  // namespace mixtailor
