#pragma once

// Numeric primitives, deterministic randomness, and shared domain types.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixtailor {

// Flat d-dimensional update vector. Length is fixed per experiment.
using GradVec = std::vector<double>;

struct WorkerUpdate {
    int worker_id = 0;
    GradVec gradient;
    bool honest = true;  // simulation metadata; never read by aggregation
};

struct PNorm {
    double p = 2.0;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Named RNG streams. One independent stream per consumer; the attack side
// never receives PoolDraw.
enum class Stream : std::uint64_t {
    PoolDraw = 1,
    DataShuffle = 2,
    AttackSearch = 3,
    ModelInit = 4,
    MonteCarlo = 5,
    WorkerBase = 100,  // worker i uses WorkerBase + i
};

// Deterministic, platform-independent generator (splitmix64). Identical
// (seed, stream) pairs produce identical draw sequences on any platform.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint64_t stream_id);
    SeededRng(std::uint64_t seed, Stream stream)
        : SeededRng(seed, static_cast<std::uint64_t>(stream)) {}

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    // uniform integer in [0, bound)
    std::uint64_t uniform_index(std::uint64_t bound);
    // standard normal, Box-Muller
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// --- vector helpers -------------------------------------------------------

bool all_finite(const GradVec& x);
void require_finite(const GradVec& x, const char* what);

GradVec add(const GradVec& a, const GradVec& b);
GradVec sub(const GradVec& a, const GradVec& b);
GradVec scale(const GradVec& a, double c);
void add_in_place(GradVec& a, const GradVec& b, double c = 1.0);
double dot(const GradVec& a, const GradVec& b);
double l2norm(const GradVec& x);

// (sum |x_i|^p)^(1/p), max-normalized so p up to 16 does not overflow.
double pnorm(const GradVec& x, PNorm p);

// Entry (i,j) = pnorm(u_i - u_j, p). Symmetric, zero diagonal.
std::vector<std::vector<double>> pairwise_distances(std::span<const GradVec> updates,
                                                    PNorm p);

// Checks ||x||_q <= ||x||_p <= d^(1/p-1/q) ||x||_q within relative slack.
bool norm_sandwich_check(const GradVec& x, double p, double q,
                         double rel_tol = 1e-9);

// --- CSV gradient matrix format ------------------------------------------
// One row per worker, comma-separated decimal reals, optional '#' header.

std::vector<GradVec> read_gradient_csv(const std::string& path);
std::vector<GradVec> parse_gradient_csv(std::istream& in);
void write_gradient_row(std::ostream& out, const GradVec& v);

// 9 significant digits, the output precision used everywhere.
std::string format_real(double v);

}  // namespace mixtailor
