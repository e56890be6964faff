#pragma once

// Relation records stored in a BlockMemory, beam-search traversal with
// multiplicative path confidence, and log-linear decay fitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "galmem/hdc.hpp"
#include "galmem/memory.hpp"
#include "galmem/parallel.hpp"

namespace galmem {

struct RelationRecord {
    std::uint64_t subject = 0;
    std::uint64_t relation = 0;
    std::uint64_t object = 0;
    friend bool operator==(const RelationRecord&, const RelationRecord&) = default;
};

/// Maps node and relation ids to hypervectors, and (subject, relation) pairs
/// to memory keys bind(node, label).
class KeySpace {
public:
    KeySpace(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {}

    std::size_t dimension() const noexcept { return dimension_; }
    std::uint64_t seed() const noexcept { return seed_; }

    Hypervector node_hv(std::uint64_t id) const { return Codebook::atom("node:" + std::to_string(id), dimension_, seed_); }
    Hypervector label_hv(std::uint64_t id) const { return Codebook::atom("rel:" + std::to_string(id), dimension_, seed_); }

    BitPolynomial key(std::uint64_t subject, std::uint64_t relation) const {
        return BitPolynomial(bind(node_hv(subject), label_hv(relation)));
    }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

struct LoadReport {
    std::uint64_t writes = 0;
    std::uint64_t collided_writes = 0;            // writes with at least one collided block
    std::vector<std::uint64_t> collisions_per_block;
    std::uint64_t poisoned_slots = 0;
    std::uint64_t rescued_entries = 0;

    std::uint64_t total_collisions() const {
        std::uint64_t s = 0;
        for (auto c : collisions_per_block) s += c;
        return s;
    }
};

namespace detail {
inline void require_key_length(const BlockMemory& mem, const KeySpace& keys) {
    if (mem.config().input_length != keys.dimension())
        throw Error(ErrorCode::LengthMismatch, "key dimension " + std::to_string(keys.dimension()) +
                                                   " != memory input length " + std::to_string(mem.config().input_length));
}

inline void finish_report(const BlockMemory& mem, LoadReport& r) {
    r.poisoned_slots = 0;
    for (unsigned b = 0; b < mem.n_blocks(); ++b) r.poisoned_slots += mem.slot_counts(b).poisoned;
    r.rescued_entries = mem.rescue_entries();
}
} // namespace detail

inline LoadReport load_edges(BlockMemory& mem, const KeySpace& keys, const std::vector<RelationRecord>& edges) {
    detail::require_key_length(mem, keys);
    LoadReport r;
    r.collisions_per_block.assign(mem.n_blocks(), 0);
    for (const auto& e : edges) {
        const WriteReport w = mem.write(keys.key(e.subject, e.relation), EntryAddress{e.object});
        ++r.writes;
        if (!w.collided_blocks.empty()) ++r.collided_writes;
        for (unsigned b : w.collided_blocks) ++r.collisions_per_block[b];
    }
    detail::finish_report(mem, r);
    return r;
}

// ---- synthetic layered DAGs ---------------------------------------------------

struct DagSpec {
    unsigned branching = 2;
    unsigned depth = 3;
    std::uint64_t width = 0;  // nodes per level; 0 builds a full b-ary tree
    double inject_rate = 0;   // fraction of edges given one forced block collision
    std::uint64_t seed = 0;
};

struct Injection {
    std::size_t edge = 0;
    unsigned block = 0;
};

struct SyntheticDag {
    std::uint64_t root = 0;
    std::vector<RelationRecord> edges;
    std::vector<Injection> injections;
};

/// Node id = level << 40 | index within level. Relation ids are 0..b-1, so
/// every node has at most one child per relation.
inline std::uint64_t dag_node_id(unsigned level, std::uint64_t index) { return (std::uint64_t{level} << 40) | index; }

inline SyntheticDag generate_dag(const DagSpec& spec, unsigned n_blocks) {
    if (spec.branching == 0 || spec.depth == 0) throw Error(ErrorCode::ConfigInvalid, "branching and depth must be positive");
    if (spec.inject_rate < 0 || spec.inject_rate > 1) throw Error(ErrorCode::ConfigInvalid, "inject rate outside [0, 1]");
    CounterRng rng(spec.seed, 0xda6);
    SyntheticDag dag;
    dag.root = dag_node_id(0, 0);
    std::uint64_t level_size = 1;
    for (unsigned level = 0; level < spec.depth; ++level) {
        const std::uint64_t next_size = spec.width ? spec.width : level_size * spec.branching;
        if (next_size >= (std::uint64_t{1} << 40)) throw Error(ErrorCode::ConfigInvalid, "DAG level too wide");
        for (std::uint64_t i = 0; i < level_size; ++i)
            for (unsigned r = 0; r < spec.branching; ++r) {
                const std::uint64_t child = spec.width ? rng.below(next_size) : i * spec.branching + r;
                dag.edges.push_back({dag_node_id(level, i), r, dag_node_id(level + 1, child)});
            }
        level_size = next_size;
    }
    if (spec.inject_rate > 0) {
        CounterRng inj(spec.seed, 0x1ec7);
        for (std::size_t e = 0; e < dag.edges.size(); ++e)
            if (inj.bernoulli(spec.inject_rate)) dag.injections.push_back({e, static_cast<unsigned>(inj.below(n_blocks))});
    }
    return dag;
}

/// Forces a collision in one block for each listed edge by writing a kernel
/// collider with a different entry address. Colliders are redrawn until their
/// other blocks land on empty slots, so each injection affects one block.
inline LoadReport inject_collisions(BlockMemory& mem, const KeySpace& keys, const std::vector<RelationRecord>& edges,
                                    const std::vector<Injection>& injections, std::uint64_t seed) {
    detail::require_key_length(mem, keys);
    LoadReport r;
    r.collisions_per_block.assign(mem.n_blocks(), 0);
    CounterRng rng(seed, 0xc011);
    for (const auto& inj : injections) {
        const auto& e = edges.at(inj.edge);
        const BitPolynomial key = keys.key(e.subject, e.relation);
        BitPolynomial collider = make_block_collider(mem, key, inj.block, rng);
        for (int attempt = 0; attempt < 64; ++attempt) {
            const auto addrs = mem.addresses(collider);
            bool clean = true;
            for (unsigned b = 0; b < mem.n_blocks() && clean; ++b)
                if (b != inj.block && mem.slot_state(b, addrs[b]) != BlockMemory::SlotState::Empty) clean = false;
            if (clean) break;
            collider = make_block_collider(mem, key, inj.block, rng);
        }
        const WriteReport w = mem.write(collider, EntryAddress{~e.object});
        ++r.writes;
        if (!w.collided_blocks.empty()) ++r.collided_writes;
        for (unsigned b : w.collided_blocks) ++r.collisions_per_block[b];
    }
    detail::finish_report(mem, r);
    return r;
}

// ---- edge text format -----------------------------------------------------------

inline std::vector<RelationRecord> parse_edges(std::istream& in) {
    std::vector<RelationRecord> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::uint64_t f[3];
        std::size_t pos = 0;
        for (int i = 0; i < 3; ++i) {
            const std::size_t end = i < 2 ? line.find('\t', pos) : line.size();
            const std::string field = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
            if (end == std::string::npos || field.empty() ||
                field.find_first_not_of("0123456789") != std::string::npos)
                throw Error(ErrorCode::ParseError, "edge line " + std::to_string(lineno) + ": expected three tab-separated decimal ids");
            try {
                f[i] = std::stoull(field);
            } catch (const std::out_of_range&) {
                throw Error(ErrorCode::ParseError, "edge line " + std::to_string(lineno) + ": id out of range");
            }
            pos = end + 1;
        }
        out.push_back({f[0], f[1], f[2]});
    }
    return out;
}

inline std::string format_edges(const std::vector<RelationRecord>& edges) {
    std::string s;
    for (const auto& e : edges)
        s += std::to_string(e.subject) + '\t' + std::to_string(e.relation) + '\t' + std::to_string(e.object) + '\n';
    return s;
}

// ---- traversal ----------------------------------------------------------------------

struct Hop {
    std::uint64_t node = 0;      // node the read started from
    std::uint64_t relation = 0;
    VoteResult result;           // result.winner is the next node
};

struct PathTrace {
    std::uint64_t start = 0;
    std::vector<Hop> hops;
    double cr2 = 1.0;
    bool complete = false;

    void append(Hop hop) {
        cr2 *= hop.result.cr1;
        hops.push_back(std::move(hop));
    }

    std::size_t depth() const noexcept { return hops.size(); }

    std::uint64_t end() const { return hops.empty() ? start : hops.back().result.winner->value; }

    std::vector<std::uint64_t> nodes() const {
        std::vector<std::uint64_t> out{start};
        for (const auto& h : hops) out.push_back(h.result.winner->value);
        return out;
    }
};

/// Orders by cr2 descending, then by node sequence ascending.
inline bool trace_rank_less(const PathTrace& a, const PathTrace& b) {
    if (a.cr2 != b.cr2) return a.cr2 > b.cr2;
    return a.nodes() < b.nodes();
}

struct Traversal {
    std::vector<PathTrace> complete;  // ranked
    std::vector<PathTrace> partial;   // stopped at a node with no stored successor
};

/// Beam search. relations[h] is the candidate set tried at hop h. Each hop
/// reads every (frontier path, candidate) pair, then keeps the fs best paths.
inline Traversal traverse(const BlockMemory& mem, const KeySpace& keys, std::uint64_t start,
                          const std::vector<std::vector<std::uint64_t>>& relations, std::size_t fs) {
    if (fs == 0) throw Error(ErrorCode::ConfigInvalid, "frontier size must be at least 1");
    if (relations.empty()) throw Error(ErrorCode::ConfigInvalid, "traversal needs at least one hop");
    detail::require_key_length(mem, keys);

    Traversal out;
    std::vector<PathTrace> frontier(1);
    frontier[0].start = start;
    for (std::size_t h = 0; h < relations.size(); ++h) {
        std::vector<std::vector<PathTrace>> grown(frontier.size());
        for_each_chunk(frontier.size(), [&](std::size_t i) {
            const PathTrace& path = frontier[i];
            const std::uint64_t at = path.end();
            for (std::uint64_t rel : relations[h]) {
                VoteResult v = mem.read(keys.key(at, rel));
                if (!v.found()) continue;
                PathTrace next = path;
                next.append({at, rel, std::move(v)});
                grown[i].push_back(std::move(next));
            }
        });
        std::vector<PathTrace> next;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            if (grown[i].empty())
                out.partial.push_back(std::move(frontier[i]));
            else
                for (auto& p : grown[i]) next.push_back(std::move(p));
        }
        std::sort(next.begin(), next.end(), trace_rank_less);
        if (next.size() > fs) next.resize(fs);
        if (next.empty())
            throw Error(ErrorCode::NotFound, "frontier emptied at hop " + std::to_string(h + 1) + " of " +
                                                 std::to_string(relations.size()));
        frontier = std::move(next);
    }
    for (auto& p : frontier) p.complete = true;
    out.complete = std::move(frontier);
    std::sort(out.partial.begin(), out.partial.end(), trace_rank_less);
    return out;
}

/// Same candidate set at every one of `depth` hops.
inline Traversal traverse(const BlockMemory& mem, const KeySpace& keys, std::uint64_t start,
                          const std::vector<std::uint64_t>& candidates, std::size_t depth, std::size_t fs) {
    return traverse(mem, keys, start, std::vector<std::vector<std::uint64_t>>(depth, candidates), fs);
}

/// 1.0 when every trace has the same cr2 (ranking carries no information);
/// otherwise (distinct cr2 classes / traces) times the observed per-hop
/// branching traces^(1/depth).
inline double effective_branching(const std::vector<PathTrace>& traces) {
    if (traces.empty()) throw Error(ErrorCode::ConfigInvalid, "effective branching of an empty trace list");
    std::vector<double> values;
    std::size_t depth = 0;
    for (const auto& t : traces) {
        values.push_back(t.cr2);
        depth = std::max(depth, t.depth());
    }
    std::sort(values.begin(), values.end());
    std::size_t classes = 1;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] - values[i - 1] > 1e-12 * std::max(std::abs(values[i]), 1e-300)) ++classes;
    if (classes == 1) return 1.0;
    const double n = static_cast<double>(traces.size());
    const double observed = depth ? std::pow(n, 1.0 / static_cast<double>(depth)) : n;
    return static_cast<double>(classes) / n * observed;
}

// ---- decay fitting -------------------------------------------------------------------

struct DecayPoint {
    std::size_t depth = 0;
    double mean_cr2 = 0;
    std::uint64_t n_traces = 0;
};

/// Mean cr2 per depth over complete traces; partial traces are skipped.
inline std::vector<DecayPoint> group_by_depth(const std::vector<PathTrace>& traces) {
    std::map<std::size_t, std::pair<double, std::uint64_t>> acc;
    for (const auto& t : traces) {
        if (!t.complete) continue;
        auto& [sum, n] = acc[t.depth()];
        sum += t.cr2;
        ++n;
    }
    std::vector<DecayPoint> out;
    for (const auto& [d, sn] : acc) out.push_back({d, sn.first / static_cast<double>(sn.second), sn.second});
    return out;
}

struct DecayFit {
    // log F = intercept + slope * n
    double slope = 0;
    double intercept = 0;
    double r_squared = 0;
    // residual sums of squares, all measured on F itself
    double ssr_multiplicative = 0;
    double ssr_additive = 0;  // F = 1 - c n
    double ssr_power = 0;     // F = c n^(-a)
    double additive_c = 0;
    double power_c = 0;
    double power_a = 0;

    bool multiplicative_best() const { return ssr_multiplicative < ssr_additive && ssr_multiplicative < ssr_power; }
};

namespace detail {
struct LineFit {
    double slope, intercept, ss_res, ss_tot;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f{sxy / sxx, 0, 0, syy};
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.ss_res += r * r;
    }
    return f;
}
} // namespace detail

inline DecayFit decay_fit(const std::vector<DecayPoint>& points) {
    std::set<std::size_t> depths;
    for (const auto& p : points) {
        if (p.depth == 0) throw Error(ErrorCode::DegenerateFit, "depth 0 cannot enter a log-log fit");
        if (!(p.mean_cr2 > 0) || !std::isfinite(std::log(p.mean_cr2)))
            throw Error(ErrorCode::DegenerateFit, "mean cr2 at depth " + std::to_string(p.depth) + " is not positive");
        depths.insert(p.depth);
    }
    if (depths.size() < 3 || depths.size() != points.size())
        throw Error(ErrorCode::DegenerateFit, "need at least 3 distinct depths, one point each");

    std::vector<double> n, logn, f, logf;
    for (const auto& p : points) {
        n.push_back(static_cast<double>(p.depth));
        logn.push_back(std::log(static_cast<double>(p.depth)));
        f.push_back(p.mean_cr2);
        logf.push_back(std::log(p.mean_cr2));
    }

    DecayFit out;
    const auto lin = detail::least_squares(n, logf);
    out.slope = lin.slope;
    out.intercept = lin.intercept;
    out.r_squared = lin.ss_tot > 0 ? 1.0 - lin.ss_res / lin.ss_tot : 1.0;

    double snn = 0, sn1f = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        snn += n[i] * n[i];
        sn1f += n[i] * (1.0 - f[i]);
    }
    out.additive_c = sn1f / snn;

    const auto pw = detail::least_squares(logn, logf);
    out.power_a = -pw.slope;
    out.power_c = std::exp(pw.intercept);

    for (std::size_t i = 0; i < n.size(); ++i) {
        const double em = f[i] - std::exp(out.intercept + out.slope * n[i]);
        const double ea = f[i] - (1.0 - out.additive_c * n[i]);
        const double ep = f[i] - out.power_c * std::pow(n[i], -out.power_a);
        out.ssr_multiplicative += em * em;
        out.ssr_additive += ea * ea;
        out.ssr_power += ep * ep;
    }
    return out;
}

inline std::string decay_csv(const std::vector<DecayPoint>& points) {
    std::string s = "depth,mean_cr2,log_mean_cr2,n_traces\n";
    char buf[128];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%llu\n", p.depth, p.mean_cr2, std::log(p.mean_cr2),
                      static_cast<unsigned long long>(p.n_traces));
        s += buf;
    }
    return s;
}

/// Chains of independent per-hop Bernoulli(p_i) successes. Point n is the
/// fraction of trials whose first n hops all succeeded.
inline std::vector<DecayPoint> simulate_chain_success(const std::vector<double>& p, std::uint64_t trials, std::uint64_t seed) {
    constexpr std::uint64_t kChunk = 4096;
    const std::size_t chunks = static_cast<std::size_t>((trials + kChunk - 1) / kChunk);
    std::vector<std::vector<std::uint64_t>> parts(chunks, std::vector<std::uint64_t>(p.size(), 0));
    for_each_chunk(chunks, [&](std::size_t c) {
        CounterRng rng(seed, c);
        const std::uint64_t lo = c * kChunk, hi = std::min(trials, lo + kChunk);
        for (std::uint64_t t = lo; t < hi; ++t)
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!rng.bernoulli(p[i])) break;
                ++parts[c][i];
            }
    });
    std::vector<DecayPoint> out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::uint64_t s = 0;
        for (const auto& part : parts) s += part[i];
        out.push_back({i + 1, static_cast<double>(s) / static_cast<double>(trials), trials});
    }
    return out;
}

} // namespace galmem
