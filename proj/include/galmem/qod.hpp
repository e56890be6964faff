#pragma once

// Statistics of the diffusion map's output weights, and the random sparse
// projection baseline it is compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "galmem/gf2.hpp"
#include "galmem/parallel.hpp"
#include "galmem/rational.hpp"
#include "galmem/rng.hpp"

namespace galmem {

inline constexpr unsigned kMaxHistogramDegree = 20;

struct WeightHistogram {
    std::vector<std::uint64_t> counts;  // counts[w] = residues of Hamming weight w
    std::uint64_t total = 0;

    Rational mean() const {
        unsigned __int128 s = 0;
        for (std::size_t w = 0; w < counts.size(); ++w) s += static_cast<unsigned __int128>(w) * counts[w];
        return Rational::make(s, total);
    }

    /// Population variance as an exact fraction.
    Rational variance_exact() const {
        unsigned __int128 s1 = 0, s2 = 0;
        for (std::size_t w = 0; w < counts.size(); ++w) {
            s1 += static_cast<unsigned __int128>(w) * counts[w];
            s2 += static_cast<unsigned __int128>(w * w) * counts[w];
        }
        const unsigned __int128 n = total;
        return Rational::make(s2 * n - s1 * s1, n * n);
    }

    double variance() const { return variance_exact().value(); }

    friend bool operator==(const WeightHistogram&, const WeightHistogram&) = default;
};

struct HwMoments {
    Rational mean;                          // m 2^(m-1) / (2^m - 1)
    double variance = 0;                    // (m/4)/(1-2^-m) - (m^2/4) 2^-m/(1-2^-m)^2
    std::optional<Rational> variance_exact; // same quantity as a fraction, m <= 24
};

/// Moments of HW(xi) for xi uniform on the nonzero elements of GF(2^m),
/// i.e. Binomial(m, 1/2) conditioned on being >= 1.
inline HwMoments hw_moments_closed_form(unsigned m) {
    if (m < 2 || m > kMaxDegree) throw Error(ErrorCode::ConfigInvalid, "m must be in [2, 32]");
    using u128 = unsigned __int128;
    const u128 two_m = u128{1} << m;
    HwMoments out;
    out.mean = Rational::make(u128{m} << (m - 1), two_m - 1);

    const double q = std::ldexp(1.0, -static_cast<int>(m));
    const double md = m;
    out.variance = (md / 4.0) / (1.0 - q) - (md * md / 4.0) * q / ((1.0 - q) * (1.0 - q));

    if (m <= kMaxEnumerableDegree) {
        // m 2^(m-2) (2^m - m - 1) / (2^m - 1)^2
        const u128 num = (u128{m} << (m - 2)) * (two_m - m - 1);
        out.variance_exact = Rational::make(num, (two_m - 1) * (two_m - 1));
    }
    return out;
}

/// Histogram of HW over all 2^m - 1 nonzero residues, visited as the powers
/// x^0, x^1, ... of the primitive element x.
inline WeightHistogram hw_distribution_exact(const Generator& g) {
    if (!g.primitive_verified()) throw Error(ErrorCode::UnverifiedGenerator, "histogram enumeration walks powers of x");
    const unsigned m = g.degree();
    if (m > kMaxHistogramDegree)
        throw Error(ErrorCode::DegreeTooLarge, "exact histogram limited to m <= " + std::to_string(kMaxHistogramDegree));
    WeightHistogram h;
    h.counts.assign(m + 1, 0);
    h.total = (std::uint64_t{1} << m) - 1;
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < h.total; ++i) {
        ++h.counts[static_cast<std::size_t>(std::popcount(r))];
        r = detail::mul_by_x(r, g.modulus(), m);
    }
    return h;
}

/// Pr[|U/m - 1/2| > epsilon] for U ~ Binomial(m, 1/2) conditioned on U >= 1.
inline double binomial_tail_nonzero(unsigned m, double epsilon) {
    double tail = 0;
    double log_c = 0;  // log C(m, w)
    for (unsigned w = 1; w <= m; ++w) {
        log_c += std::log(static_cast<double>(m - w + 1)) - std::log(static_cast<double>(w));
        if (std::fabs(static_cast<double>(w) / m - 0.5) > epsilon) tail += std::exp(log_c - m * std::log(2.0));
    }
    return tail / (1.0 - std::ldexp(1.0, -static_cast<int>(m)));
}

inline double hoeffding_bound(unsigned m, double epsilon) { return 2.0 * std::exp(-2.0 * epsilon * epsilon * m); }

struct QodReport {
    unsigned m = 0;
    std::size_t length = 0;  // L; 0 for exhaustive enumeration over the field
    bool exhaustive = false;
    std::uint64_t samples = 0;
    std::uint64_t rejected = 0;  // draws that landed in the collision kernel
    std::uint64_t rng_seed = 0;
    double epsilon = 0;
    double mean = 0;
    std::optional<Rational> exact_mean;
    double variance = 0;
    double empirical_tail = 0;
    double hoeffding_bound = 0;
    double exact_tail = 0;  // binomial-law tail, the analytic reference
    double slack = 0;       // 3 sigma of the empirical tail under exact_tail

    bool within_bound() const { return empirical_tail <= hoeffding_bound + slack; }
};

/// Uniform element of GF(2)^L, packed.
inline BitPolynomial random_polynomial(std::size_t length, CounterRng& rng) {
    BitPolynomial p(length);
    auto words = p.bits().words();
    for (auto& w : words) w = rng();
    if (length % 64 != 0) words.back() &= (std::uint64_t{1} << (length % 64)) - 1;
    return p;
}

/// Monte Carlo estimate of the fractional-weight tail for differences drawn
/// uniformly from GF(2)^L minus the collision kernel (by rejection).
inline QodReport concentration_check(const Generator& g, std::size_t length, double epsilon, std::uint64_t samples,
                                     std::uint64_t rng_seed) {
    const unsigned m = g.degree();
    if (length <= m) throw Error(ErrorCode::ConfigInvalid, "concentration sampling needs L > m");
    if (samples == 0) throw Error(ErrorCode::ConfigInvalid, "samples must be >= 1");
    if (!g.primitive_verified()) throw Error(ErrorCode::UnverifiedGenerator, "diffusion needs a verified generator");

    constexpr std::uint64_t kChunk = 4096;
    const std::size_t chunks = static_cast<std::size_t>((samples + kChunk - 1) / kChunk);
    struct Partial {
        std::uint64_t tail = 0, rejected = 0, s1 = 0, s2 = 0;
    };
    std::vector<Partial> parts(chunks);
    for_each_chunk(chunks, [&](std::size_t c) {
        CounterRng rng(rng_seed, c);
        const std::uint64_t quota = std::min<std::uint64_t>(kChunk, samples - c * kChunk);
        Partial p;
        for (std::uint64_t i = 0; i < quota;) {
            const BitPolynomial delta = random_polynomial(length, rng);
            if (reduce(delta, g).is_zero()) {
                ++p.rejected;
                continue;
            }
            const unsigned w = diffuse(delta, g).weight();
            p.s1 += w;
            p.s2 += std::uint64_t{w} * w;
            if (std::fabs(static_cast<double>(w) / m - 0.5) > epsilon) ++p.tail;
            ++i;
        }
        parts[c] = p;
    });

    Partial total;
    for (const auto& p : parts) {
        total.tail += p.tail;
        total.rejected += p.rejected;
        total.s1 += p.s1;
        total.s2 += p.s2;
    }
    QodReport r;
    r.m = m;
    r.length = length;
    r.samples = samples;
    r.rejected = total.rejected;
    r.rng_seed = rng_seed;
    r.epsilon = epsilon;
    const double n = static_cast<double>(samples);
    r.mean = static_cast<double>(total.s1) / n;
    r.variance = static_cast<double>(total.s2) / n - r.mean * r.mean;
    r.empirical_tail = static_cast<double>(total.tail) / n;
    r.hoeffding_bound = hoeffding_bound(m, epsilon);
    r.exact_tail = binomial_tail_nonzero(m, epsilon);
    r.slack = 3.0 * std::sqrt(r.exact_tail * (1.0 - r.exact_tail) / n);
    return r;
}

/// Same report computed by visiting every nonzero residue once.
inline QodReport concentration_exact(const Generator& g, double epsilon) {
    const WeightHistogram h = hw_distribution_exact(g);
    const unsigned m = g.degree();
    QodReport r;
    r.m = m;
    r.exhaustive = true;
    r.samples = h.total;
    r.epsilon = epsilon;
    r.exact_mean = h.mean();
    r.mean = r.exact_mean->value();
    r.variance = h.variance();
    std::uint64_t tail = 0;
    for (unsigned w = 0; w <= m; ++w)
        if (std::fabs(static_cast<double>(w) / m - 0.5) > epsilon) tail += h.counts[w];
    r.empirical_tail = static_cast<double>(tail) / static_cast<double>(h.total);
    r.hoeffding_bound = hoeffding_bound(m, epsilon);
    r.exact_tail = binomial_tail_nonzero(m, epsilon);
    r.slack = 0;
    return r;
}

/// [Psi(e_0), ..., Psi(e_{L-1})] = [x^m, x^(m+1), ...] mod G.
inline std::vector<Residue> avalanche_orbit(const Generator& g, std::size_t length) {
    if (!g.primitive_verified()) throw Error(ErrorCode::UnverifiedGenerator, "orbit needs a verified generator");
    const std::uint64_t period = (std::uint64_t{1} << g.degree()) - 1;
    if (length > period)
        throw Error(ErrorCode::OrbitTooLong, "L = " + std::to_string(length) + " exceeds 2^m - 1 = " + std::to_string(period));
    std::vector<Residue> orbit;
    orbit.reserve(length);
    Residue r = g.x_to_m();
    for (std::size_t j = 0; j < length; ++j) {
        orbit.push_back(r);
        r = mul_by_x(r, g);
    }
    return orbit;
}

// ---- random sparse projection baseline ----------------------------------

/// m x L binary matrix, each row holding exactly k distinct column indices.
struct SparseProjection {
    unsigned m = 0;
    std::size_t length = 0;
    std::size_t k = 0;
    std::uint64_t rng_seed = 0;
    std::vector<std::vector<std::uint32_t>> rows;  // sorted column indices

    static SparseProjection sample(unsigned m, std::size_t length, std::size_t k, std::uint64_t rng_seed,
                                   std::uint64_t stream = 0) {
        if (m == 0 || m > 64) throw Error(ErrorCode::ConfigInvalid, "projection output width must be in [1, 64]");
        if (k < 1 || k > length) throw Error(ErrorCode::ConfigInvalid, "need 1 <= k <= L");
        CounterRng rng(rng_seed, stream);
        SparseProjection w{m, length, k, rng_seed, {}};
        w.rows.reserve(m);
        for (unsigned i = 0; i < m; ++i) {
            // Floyd's sampling: k distinct values from [0, L).
            std::vector<std::uint32_t> row;
            row.reserve(k);
            for (std::size_t j = length - k; j < length; ++j) {
                const auto t = static_cast<std::uint32_t>(rng.below(j + 1));
                if (std::find(row.begin(), row.end(), t) == row.end())
                    row.push_back(t);
                else
                    row.push_back(static_cast<std::uint32_t>(j));
            }
            std::sort(row.begin(), row.end());
            w.rows.push_back(std::move(row));
        }
        return w;
    }
};

/// Output bit i = parity of x over row i's columns.
inline Residue rsp_project(const SparseProjection& w, const BitPolynomial& x) {
    if (x.length() != w.length)
        throw Error(ErrorCode::LengthMismatch, "input length " + std::to_string(x.length()) + " != projection width " +
                                                   std::to_string(w.length));
    std::uint64_t out = 0;
    for (unsigned i = 0; i < w.m; ++i) {
        bool parity = false;
        for (auto j : w.rows[i]) parity ^= x.coeff(j);
        out |= std::uint64_t{parity} << i;
    }
    return {out};
}

/// m (1 - (1 - d/L)^k) / 2. Assumes each tap carries an independent random
/// coefficient; see rsp_exact_expected_distance for exactly-k parity rows.
inline double rsp_expected_distance(unsigned m, std::size_t length, std::size_t k, std::size_t d) {
    if (k < 1 || k > length || d > length) throw Error(ErrorCode::ConfigInvalid, "need 1 <= k <= L and 0 <= d <= L");
    const double keep = 1.0 - static_cast<double>(d) / static_cast<double>(length);
    return m * (1.0 - std::pow(keep, static_cast<double>(k))) / 2.0;
}

/// Probability that a row of k distinct columns covers an odd number of the
/// d differing coordinates (hypergeometric), i.e. that the row's output flips.
inline double rsp_row_flip_probability(std::size_t length, std::size_t k, std::size_t d) {
    auto log_choose = [](double n, double r) { return std::lgamma(n + 1) - std::lgamma(r + 1) - std::lgamma(n - r + 1); };
    const double denom = log_choose(static_cast<double>(length), static_cast<double>(k));
    double p = 0;
    for (std::size_t h = 1; h <= std::min(k, d); h += 2) {
        if (k - h > length - d) continue;
        p += std::exp(log_choose(static_cast<double>(d), static_cast<double>(h)) +
                      log_choose(static_cast<double>(length - d), static_cast<double>(k - h)) - denom);
    }
    return p;
}

/// Exact E[D] for the exactly-k construction: m times the row flip probability.
inline double rsp_exact_expected_distance(unsigned m, std::size_t length, std::size_t k, std::size_t d) {
    if (k < 1 || k > length || d > length) throw Error(ErrorCode::ConfigInvalid, "need 1 <= k <= L and 0 <= d <= L");
    return m * rsp_row_flip_probability(length, k, d);
}

struct RspMonteCarlo {
    std::uint64_t trials = 0;
    double mean = 0;
    double variance = 0;  // sample variance of D
};

/// Mean output distance over independent draws of W, each applied to a fresh
/// random pair (x, x xor delta) with |delta| = d.
inline RspMonteCarlo rsp_monte_carlo(unsigned m, std::size_t length, std::size_t k, std::size_t d, std::uint64_t trials,
                                     std::uint64_t rng_seed) {
    if (trials == 0) throw Error(ErrorCode::ConfigInvalid, "trials must be >= 1");
    if (d > length) throw Error(ErrorCode::ConfigInvalid, "d must be <= L");
    constexpr std::uint64_t kChunk = 256;
    const std::size_t chunks = static_cast<std::size_t>((trials + kChunk - 1) / kChunk);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> parts(chunks);
    for_each_chunk(chunks, [&](std::size_t c) {
        std::uint64_t s1 = 0, s2 = 0;
        const std::uint64_t end = std::min<std::uint64_t>(trials, (c + 1) * kChunk);
        for (std::uint64_t t = c * kChunk; t < end; ++t) {
            const auto w = SparseProjection::sample(m, length, k, rng_seed, 2 * t);
            CounterRng rng(rng_seed, 2 * t + 1);
            const BitPolynomial x1 = random_polynomial(length, rng);
            BitPolynomial x2 = x1;
            std::vector<std::uint32_t> idx(length);
            for (std::size_t i = 0; i < length; ++i) idx[i] = static_cast<std::uint32_t>(i);
            for (std::size_t i = 0; i < d; ++i) {  // partial Fisher-Yates
                std::swap(idx[i], idx[i + rng.below(length - i)]);
                x2.flip(idx[i]);
            }
            const std::uint64_t dist = (rsp_project(w, x1) ^ rsp_project(w, x2)).weight();
            s1 += dist;
            s2 += dist * dist;
        }
        parts[c] = {s1, s2};
    });
    std::uint64_t s1 = 0, s2 = 0;
    for (auto [a, b] : parts) {
        s1 += a;
        s2 += b;
    }
    const double n = static_cast<double>(trials);
    RspMonteCarlo r{trials, static_cast<double>(s1) / n, 0};
    r.variance = trials > 1 ? (static_cast<double>(s2) - n * r.mean * r.mean) / (n - 1) : 0;
    return r;
}

struct WorstCaseRow {
    std::size_t j = 0;
    unsigned psi_weight = 0;     // HW(Psi(e_j))
    unsigned rsp_max_distance = 0;  // max over draws of HD(W x, W (x xor e_j))
};

struct WorstCaseComparison {
    std::vector<WorstCaseRow> rows;
    std::size_t k = 0;
    std::uint64_t trials = 0;
    std::uint64_t rng_seed = 0;
    double psi_mean = 0;
    unsigned psi_min = 0;
    unsigned rsp_max = 0;
    std::size_t rsp_rows_above_k = 0;
};

/// Single-bit perturbations e_j, j < L: diffusion weight versus the worst
/// sparse-projection distance seen over `trials` draws of W.
inline WorstCaseComparison compare_worst_case(const Generator& g, std::size_t k, std::size_t length, std::uint64_t trials,
                                              std::uint64_t rng_seed) {
    if (k < 1 || k > length) throw Error(ErrorCode::ConfigInvalid, "need 1 <= k <= L");
    const unsigned m = g.degree();
    WorstCaseComparison out;
    out.k = k;
    out.trials = trials;
    out.rng_seed = rng_seed;
    out.rows.resize(length);
    for (std::size_t j = 0; j < length; ++j) {
        out.rows[j].j = j;
        out.rows[j].psi_weight = diffuse(BitPolynomial::monomial(length, j), g).weight();
    }

    // Distance for e_j is the number of rows of W that contain column j.
    constexpr std::uint64_t kChunk = 64;
    const std::size_t chunks = static_cast<std::size_t>((trials + kChunk - 1) / kChunk);
    std::vector<std::vector<unsigned>> maxima(chunks, std::vector<unsigned>(length, 0));
    for_each_chunk(chunks, [&](std::size_t c) {
        std::vector<unsigned> column(length);
        const std::uint64_t end = std::min<std::uint64_t>(trials, (c + 1) * kChunk);
        for (std::uint64_t t = c * kChunk; t < end; ++t) {
            const auto w = SparseProjection::sample(m, length, k, rng_seed, t);
            std::fill(column.begin(), column.end(), 0u);
            for (const auto& row : w.rows)
                for (auto j : row) ++column[j];
            for (std::size_t j = 0; j < length; ++j) maxima[c][j] = std::max(maxima[c][j], column[j]);
        }
    });

    double sum = 0;
    out.psi_min = m;
    for (auto& row : out.rows) {
        for (const auto& mx : maxima) row.rsp_max_distance = std::max(row.rsp_max_distance, mx[row.j]);
        sum += row.psi_weight;
        out.psi_min = std::min(out.psi_min, row.psi_weight);
        out.rsp_max = std::max(out.rsp_max, row.rsp_max_distance);
        if (row.rsp_max_distance > k) ++out.rsp_rows_above_k;
    }
    out.psi_mean = length ? sum / static_cast<double>(length) : 0;
    return out;
}

} // namespace galmem
