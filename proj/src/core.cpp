#include "mixtailor/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>

namespace mixtailor {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64(std::uint64_t& state) {
    state += kGolden;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id) {
    // Mix seed and stream so distinct streams are decorrelated.
    state_ = seed;
    std::uint64_t a = splitmix64(state_);
    state_ = stream_id * kGolden + a;
    (void)splitmix64(state_);
}

std::uint64_t SeededRng::next_u64() { return splitmix64(state_); }

double SeededRng::uniform() {
    // 53 random bits into [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t SeededRng::uniform_index(std::uint64_t bound) {
    if (bound == 0) throw InvalidInput("uniform_index: bound must be positive");
    // Lemire multiply-shift; bias is negligible for the bounds used here.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(m >> 64);
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

bool all_finite(const GradVec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_finite(const GradVec& x, const char* what) {
    if (!all_finite(x)) throw InvalidInput(std::string(what) + ": non-finite input");
}

GradVec add(const GradVec& a, const GradVec& b) {
    if (a.size() != b.size()) throw InvalidInput("add: dimension mismatch");
    GradVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

GradVec sub(const GradVec& a, const GradVec& b) {
    if (a.size() != b.size()) throw InvalidInput("sub: dimension mismatch");
    GradVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

GradVec scale(const GradVec& a, double c) {
    GradVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * c;
    return r;
}

void add_in_place(GradVec& a, const GradVec& b, double c) {
    if (a.size() != b.size()) throw InvalidInput("add_in_place: dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += c * b[i];
}

double dot(const GradVec& a, const GradVec& b) {
    if (a.size() != b.size()) throw InvalidInput("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2norm(const GradVec& x) { return pnorm(x, PNorm{2.0}); }

double pnorm(const GradVec& x, PNorm p) {
    require_finite(x, "pnorm");
    if (p.p < 1.0) throw InvalidInput("pnorm: p must be >= 1");
    double mx = 0.0;
    for (double v : x) mx = std::max(mx, std::abs(v));
    if (mx == 0.0) return 0.0;
    // factor out the max so |x_i/mx|^p stays in [0,1] for p up to 16
    double s = 0.0;
    for (double v : x) s += std::pow(std::abs(v) / mx, p.p);
    return mx * std::pow(s, 1.0 / p.p);
}

std::vector<std::vector<double>> pairwise_distances(std::span<const GradVec> updates,
                                                    PNorm p) {
    if (updates.size() < 2) throw InvalidInput("pairwise_distances: need >= 2 updates");
    const std::size_t n = updates.size();
    const std::size_t d = updates[0].size();
    for (const auto& u : updates)
        if (u.size() != d) throw InvalidInput("pairwise_distances: dimension mismatch");
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dij = pnorm(sub(updates[i], updates[j]), p);
            m[i][j] = dij;
            m[j][i] = dij;
        }
    return m;
}

bool norm_sandwich_check(const GradVec& x, double p, double q, double rel_tol) {
    if (!(0.0 < p && p < q)) throw InvalidInput("norm_sandwich_check: need 0 < p < q");
    require_finite(x, "norm_sandwich_check");
    double mx = 0.0;
    for (double v : x) mx = std::max(mx, std::abs(v));
    if (mx == 0.0) return true;
    auto raw = [&](double r) {
        double s = 0.0;
        for (double v : x) s += std::pow(std::abs(v) / mx, r);
        return mx * std::pow(s, 1.0 / r);
    };
    double np = raw(p);
    double nq = raw(q);
    double upper = std::pow(static_cast<double>(x.size()), 1.0 / p - 1.0 / q) * nq;
    double slack_lo = rel_tol * std::max(1.0, nq);
    double slack_hi = rel_tol * std::max(1.0, upper);
    return nq <= np + slack_lo && np <= upper + slack_hi;
}

std::vector<GradVec> parse_gradient_csv(std::istream& in) {
    std::vector<GradVec> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        GradVec row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InvalidInput("gradient CSV: bad value at line " +
                                   std::to_string(lineno));
            }
        }
        if (row.empty())
            throw InvalidInput("gradient CSV: empty row at line " + std::to_string(lineno));
        if (!rows.empty() && row.size() != rows.front().size())
            throw InvalidInput("gradient CSV: ragged row at line " + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InvalidInput("gradient CSV: no data rows");
    return rows;
}

std::vector<GradVec> read_gradient_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open gradient CSV: " + path);
    return parse_gradient_csv(in);
}

std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

void write_gradient_row(std::ostream& out, const GradVec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ',';
        out << format_real(v[i]);
    }
    out << '\n';
}

}  // namespace mixtailor
