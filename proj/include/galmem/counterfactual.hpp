#pragma once

// Three-step counterfactual query over two independent block memories:
// abduce the background value from the factual store, sever and replace the
// intervened mechanism, predict along the modified chain in a freshly seeded
// store, and report the ratio of the two path confidences.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "galmem/dag.hpp"
#include "galmem/hdc.hpp"
#include "galmem/memory.hpp"

namespace galmem {

/// effect = map[cause] for one single-cause structural equation.
struct Mechanism {
    std::string cause;
    std::string effect;
    std::map<std::string, std::string> map;
};

struct CfConfig {
    unsigned n_blocks = 10;
    unsigned address_bits = 16;
    std::size_t dimension = 1280;
    CollisionPolicy rr_mode = CollisionPolicy::Rescue;
    std::uint64_t seed = 0;
};

/// Forced single-block collision on hop `hop` of the counterfactual chain.
struct CfInjection {
    std::size_t hop = 0;
    unsigned block = 0;
};

struct CounterfactualQuery {
    std::map<std::string, std::string> evidence;
    std::pair<std::string, std::string> intervention;
    std::vector<Mechanism> mechanisms;
    std::optional<std::string> background;         // defaults to the chain's root variable
    std::vector<std::string> background_values;    // defaults to the root mechanism's domain
    std::optional<std::string> outcome;            // defaults to the chain's last variable
    CfConfig config;
    std::vector<CfInjection> inject;
};

/// A chain background -> v1 -> ... -> outcome with one mechanism per arrow.
struct CausalChain {
    std::vector<std::string> variables;   // variables[0] is the background
    std::vector<Mechanism> mechanisms;    // mechanisms[i] maps variables[i] to variables[i+1]
    std::vector<std::string> background_values;

    std::size_t index_of(const std::string& var) const {
        auto it = std::find(variables.begin(), variables.end(), var);
        if (it == variables.end()) throw Error(ErrorCode::ConfigInvalid, "variable '" + var + "' is not on the causal chain");
        return static_cast<std::size_t>(it - variables.begin());
    }
};

inline CausalChain make_chain(const CounterfactualQuery& q) {
    if (q.mechanisms.empty()) throw Error(ErrorCode::ConfigInvalid, "query has no mechanisms");
    std::map<std::string, const Mechanism*> by_cause;
    std::set<std::string> effects;
    for (const auto& m : q.mechanisms) {
        if (m.cause.empty() || m.effect.empty() || m.cause == m.effect)
            throw Error(ErrorCode::ConfigInvalid, "mechanism needs distinct cause and effect");
        if (!by_cause.emplace(m.cause, &m).second)
            throw Error(ErrorCode::ConfigInvalid, "variable '" + m.cause + "' drives more than one mechanism");
        if (!effects.insert(m.effect).second)
            throw Error(ErrorCode::ConfigInvalid, "variable '" + m.effect + "' has more than one mechanism");
    }
    std::string root;
    if (q.background) {
        root = *q.background;
    } else {
        for (const auto& m : q.mechanisms)
            if (!effects.contains(m.cause)) {
                if (!root.empty()) throw Error(ErrorCode::ConfigInvalid, "mechanisms do not form a single chain");
                root = m.cause;
            }
    }
    if (root.empty() || effects.contains(root)) throw Error(ErrorCode::ConfigInvalid, "no background variable");

    CausalChain c;
    c.variables.push_back(root);
    for (auto it = by_cause.find(root); it != by_cause.end(); it = by_cause.find(c.variables.back())) {
        c.mechanisms.push_back(*it->second);
        c.variables.push_back(it->second->effect);
        if (c.variables.size() > q.mechanisms.size() + 1) throw Error(ErrorCode::ConfigInvalid, "mechanisms form a cycle");
    }
    if (c.mechanisms.size() != q.mechanisms.size()) throw Error(ErrorCode::ConfigInvalid, "mechanisms do not form a single chain");
    if (q.outcome && *q.outcome != c.variables.back()) {
        // Truncate the chain at the outcome.
        const std::size_t k = c.index_of(*q.outcome);
        if (k == 0) throw Error(ErrorCode::ConfigInvalid, "outcome cannot be the background variable");
        c.variables.resize(k + 1);
        c.mechanisms.resize(k);
    }
    if (!q.background_values.empty()) {
        c.background_values = q.background_values;
    } else {
        for (const auto& [u, x] : c.mechanisms.front().map) c.background_values.push_back(u);
    }
    if (c.background_values.empty()) throw Error(ErrorCode::ConfigInvalid, "background variable has no values");
    return c;
}

/// Role-filler bindings plus their bundle. The binding list is kept so a
/// single binding can be removed exactly.
struct WorldRecord {
    std::vector<std::pair<std::string, std::string>> bindings;  // (variable, value)
    Hypervector vector;

    const std::string* value_of(const std::string& var) const {
        for (const auto& [v, val] : bindings)
            if (v == var) return &val;
        return nullptr;
    }
};

/// Role atoms and per-variable value atoms shared by both scaffolds.
class CfVocabulary {
public:
    CfVocabulary(std::size_t dimension, std::uint64_t seed) : roles_(dimension, seed), dimension_(dimension), seed_(seed) {}

    const Hypervector& role(const std::string& var) { return roles_.add("role:" + var); }
    const Hypervector& value(const std::string& var, const std::string& val) { return values(var).add(var + "=" + val); }
    Codebook& values(const std::string& var) {
        auto it = values_.find(var);
        if (it == values_.end()) it = values_.emplace(var, Codebook(dimension_, seed_)).first;
        return it->second;
    }
    const Codebook& values(const std::string& var) const {
        auto it = values_.find(var);
        if (it == values_.end()) throw Error(ErrorCode::RoleAbsent, "no values known for variable '" + var + "'");
        return it->second;
    }
    const Hypervector& role(const std::string& var) const { return roles_.at("role:" + var); }

    WorldRecord make_record(std::vector<std::pair<std::string, std::string>> bindings) {
        std::set<std::string> seen;
        std::vector<Hypervector> parts;
        for (const auto& [var, val] : bindings) {
            if (!seen.insert(var).second) throw Error(ErrorCode::ConfigInvalid, "role '" + var + "' bound twice");
            parts.push_back(bind(role(var), value(var, val)));
        }
        return {std::move(bindings), bundle(parts)};
    }

    /// unbind the role, then clean up against that variable's values.
    std::string query(const WorldRecord& r, const std::string& var) const {
        const CleanupResult c = cleanup(unbind(r.vector, role(var)), values(var));
        return c.name.substr(var.size() + 1);
    }

private:
    Codebook roles_;
    std::map<std::string, Codebook> values_;
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Replaces var's binding with (var, new_value) and rebuilds the bundle.
inline WorldRecord intervene(const WorldRecord& record, const std::string& var, const std::string& new_value, CfVocabulary& vocab) {
    auto bindings = record.bindings;
    auto it = std::find_if(bindings.begin(), bindings.end(), [&](const auto& b) { return b.first == var; });
    if (it == bindings.end()) throw Error(ErrorCode::RoleAbsent, "record has no binding for '" + var + "'");
    bindings.erase(it);
    bindings.emplace_back(var, new_value);
    return vocab.make_record(std::move(bindings));
}

enum class ScaffoldRole : std::uint8_t { Factual, Counterfactual };

/// One block memory with its key space. Node ids are indices into `symbols`
/// ("var=value"); relation id i is mechanism i of the chain.
struct Scaffold {
    ScaffoldRole role;
    BlockMemory store;
    KeySpace keys;
    std::map<std::string, std::uint64_t> symbols;
    std::vector<WorldRecord> worlds;
    std::vector<std::string> evidence_vars;  // sorted

    std::uint64_t node(const std::string& var, const std::string& val) const {
        auto it = symbols.find(var + "=" + val);
        if (it == symbols.end()) throw Error(ErrorCode::NotFound, "unknown value " + var + "=" + val);
        return it->second;
    }
    std::string symbol(std::uint64_t id) const {
        for (const auto& [name, i] : symbols)
            if (i == id) return name;
        throw Error(ErrorCode::NotFound, "unknown node id " + std::to_string(id));
    }
};

namespace detail {
inline std::map<std::string, std::uint64_t> chain_symbols(const CausalChain& c, const std::pair<std::string, std::string>* extra) {
    std::set<std::string> names;
    for (const auto& u : c.background_values) names.insert(c.variables[0] + "=" + u);
    for (const auto& m : c.mechanisms)
        for (const auto& [a, b] : m.map) {
            names.insert(m.cause + "=" + a);
            names.insert(m.effect + "=" + b);
        }
    if (extra) names.insert(extra->first + "=" + extra->second);
    std::map<std::string, std::uint64_t> out;
    std::uint64_t id = 0;
    for (const auto& n : names) out.emplace(n, id++);
    return out;
}

inline Hypervector evidence_key(CfVocabulary& vocab, const std::map<std::string, std::string>& evidence, std::size_t dimension) {
    Hypervector key(dimension);
    for (const auto& [var, val] : evidence) key ^= bind(vocab.role(var), vocab.value(var, val));
    return key;
}
} // namespace detail

/// Factual store: every world the chain produces from a background value,
/// indexed under the evidence variables, plus one relation record per
/// mechanism entry. Worlds sharing identical evidence split the blocks
/// between them (occurrence c of n keeps the evidence segment in blocks
/// b = c mod n and scrambles the rest), so a query on that evidence gets a
/// split vote instead of a single confident answer.
inline Scaffold build_factual(const CausalChain& chain, const std::vector<std::string>& evidence_vars, const CfConfig& cfg,
                              CfVocabulary& vocab) {
    MemoryConfig mc = MemoryConfig::gated(cfg.n_blocks, cfg.address_bits, cfg.dimension, cfg.rr_mode, cfg.seed);
    Scaffold s{ScaffoldRole::Factual, BlockMemory(std::move(mc)), KeySpace(cfg.dimension, cfg.seed), detail::chain_symbols(chain, nullptr), {}, {}};
    s.evidence_vars = evidence_vars;
    std::sort(s.evidence_vars.begin(), s.evidence_vars.end());
    for (const auto& v : s.evidence_vars) chain.index_of(v);

    std::map<std::string, std::vector<std::size_t>> by_evidence;
    std::vector<std::map<std::string, std::string>> world_evidence;
    for (const auto& u : chain.background_values) {
        std::vector<std::pair<std::string, std::string>> bindings{{chain.variables[0], u}};
        std::string cur = u;
        for (const auto& m : chain.mechanisms) {
            auto it = m.map.find(cur);
            if (it == m.map.end())
                throw Error(ErrorCode::ConfigInvalid, "mechanism " + m.cause + "->" + m.effect + " has no entry for " + cur);
            cur = it->second;
            bindings.emplace_back(m.effect, cur);
        }
        std::map<std::string, std::string> ev;
        std::string ev_name;
        for (const auto& v : s.evidence_vars) {
            ev[v] = bindings[chain.index_of(v)].second;
            ev_name += v + "=" + ev[v] + ";";
        }
        by_evidence[ev_name].push_back(s.worlds.size());
        world_evidence.push_back(std::move(ev));
        s.worlds.push_back(vocab.make_record(std::move(bindings)));
    }

    const std::size_t q = cfg.dimension / cfg.n_blocks;
    CounterRng scramble(cfg.seed, 0xabd);
    for (const auto& [name, members] : by_evidence) {
        if (members.size() > cfg.n_blocks)
            throw Error(ErrorCode::ConfigInvalid, "more worlds share evidence " + name + " than there are blocks");
        const Hypervector base = detail::evidence_key(vocab, world_evidence[members.front()], cfg.dimension);
        for (std::size_t c = 0; c < members.size(); ++c) {
            Hypervector key = base;
            for (unsigned b = 0; b < cfg.n_blocks; ++b) {
                if (b % members.size() == c) continue;
                for (std::size_t j = b * q; j < (b + 1) * q; ++j) key.set(j, scramble() & 1u);
            }
            s.store.write(BitPolynomial(key), EntryAddress{members[c]});
        }
    }

    std::vector<RelationRecord> edges;
    for (std::size_t i = 0; i < chain.mechanisms.size(); ++i)
        for (const auto& [a, b] : chain.mechanisms[i].map)
            edges.push_back({s.node(chain.mechanisms[i].cause, a), i, s.node(chain.mechanisms[i].effect, b)});
    load_edges(s.store, s.keys, edges);
    return s;
}

struct AbductionResult {
    std::string u_hat;
    std::size_t world = 0;
    VoteResult vote;
};

inline AbductionResult abduce(const Scaffold& pi_a, const std::map<std::string, std::string>& evidence, CfVocabulary& vocab) {
    std::vector<std::string> vars;
    for (const auto& [v, val] : evidence) vars.push_back(v);
    if (vars != pi_a.evidence_vars) throw Error(ErrorCode::AbductionFailed, "evidence variables differ from the indexed ones");
    const Hypervector key = detail::evidence_key(vocab, evidence, pi_a.keys.dimension());
    VoteResult v = pi_a.store.read(BitPolynomial(key));
    if (!v.found() || v.winner->value >= pi_a.worlds.size())
        throw Error(ErrorCode::AbductionFailed, "no stored world matches the evidence");
    const std::size_t w = static_cast<std::size_t>(v.winner->value);
    const std::string& background = pi_a.worlds[w].bindings.front().first;
    return {vocab.query(pi_a.worlds[w], background), w, std::move(v)};
}

/// Counterfactual store: Π_A's configuration with fresh per-block seeds
/// (each differing from Π_A's), holding the chain's mechanisms with the
/// mechanism into the intervened variable replaced by a constant.
inline Scaffold build_counterfactual(const Scaffold& pi_a, const CausalChain& chain,
                                     const std::pair<std::string, std::string>& intervention, std::uint64_t seed) {
    const std::size_t target = chain.index_of(intervention.first);
    if (target == 0) throw Error(ErrorCode::ConfigInvalid, "cannot intervene on the background variable");

    MemoryConfig mc = pi_a.store.config();
    mc.schedule = Schedule::Gated;
    CounterRng rng(seed, 0xb);
    for (unsigned b = 0; b < mc.n_blocks; ++b) {
        Residue fresh;
        do fresh = Residue{rng() & mc.generators[b].mask()};
        while (fresh == pi_a.store.config().seeds[b]);
        mc.seeds[b] = fresh;
    }
    Scaffold s{ScaffoldRole::Counterfactual, BlockMemory(std::move(mc)), pi_a.keys, detail::chain_symbols(chain, &intervention), {}, {}};

    std::vector<RelationRecord> edges;
    for (std::size_t i = 0; i < chain.mechanisms.size(); ++i) {
        const Mechanism& m = chain.mechanisms[i];
        if (i + 1 != target) {
            for (const auto& [a, b] : m.map) edges.push_back({s.node(m.cause, a), i, s.node(m.effect, b)});
            continue;
        }
        // Severed mechanism: every known value of the cause maps to the constant.
        const std::string prefix = m.cause + "=";
        for (const auto& [name, id] : s.symbols)
            if (name.rfind(prefix, 0) == 0) edges.push_back({id, i, s.node(m.effect, intervention.second)});
    }
    load_edges(s.store, s.keys, edges);
    return s;
}

struct Prediction {
    std::string value;
    PathTrace trace;
};

/// Follows the chain from background = u in the given scaffold.
inline Prediction follow_chain(const Scaffold& s, const CausalChain& chain, const std::string& u) {
    std::vector<std::vector<std::uint64_t>> rels;
    for (std::size_t i = 0; i < chain.mechanisms.size(); ++i) rels.push_back({i});
    Traversal t = traverse(s.store, s.keys, s.node(chain.variables[0], u), rels, 1);
    PathTrace trace = std::move(t.complete.front());
    const std::string sym = s.symbol(trace.end());
    const std::string prefix = chain.variables.back() + "=";
    if (sym.rfind(prefix, 0) != 0) throw Error(ErrorCode::NotFound, "chain ended at " + sym + ", not the outcome");
    return {sym.substr(prefix.size()), std::move(trace)};
}

inline Prediction predict(const Scaffold& pi_b, const CausalChain& chain, const std::string& u_hat) {
    return follow_chain(pi_b, chain, u_hat);
}

inline double estimate(const PathTrace& factual, const PathTrace& counterfactual) {
    if (factual.hops.empty() || counterfactual.hops.empty())
        throw Error(ErrorCode::ConfigInvalid, "estimator needs two non-empty traces");
    if (factual.cr2 == 0) throw Error(ErrorCode::DegenerateFactual, "factual path confidence is zero");
    return counterfactual.cr2 / factual.cr2;
}

struct CounterfactualResult {
    std::string u_hat;
    std::string y_hat;          // counterfactual outcome
    std::string y_factual;      // outcome along the factual chain from u_hat
    double ratio = 0;
    AbductionResult abduction;
    PathTrace factual;
    PathTrace counterfactual;
    std::vector<std::string> warnings;
    std::string factual_snapshot_before;
    std::string factual_snapshot_after;
};

inline CounterfactualResult run_counterfactual(const CounterfactualQuery& q) {
    const CausalChain chain = make_chain(q);
    if (q.evidence.empty()) throw Error(ErrorCode::ConfigInvalid, "query has no evidence");
    const CfConfig& cfg = q.config;
    CfVocabulary vocab(cfg.dimension, cfg.seed);

    std::vector<std::string> evidence_vars;
    for (const auto& [v, val] : q.evidence) evidence_vars.push_back(v);
    const Scaffold pi_a = build_factual(chain, evidence_vars, cfg, vocab);

    CounterfactualResult r;
    r.factual_snapshot_before = pi_a.store.snapshot_bytes();
    r.abduction = abduce(pi_a, q.evidence, vocab);
    r.u_hat = r.abduction.u_hat;
    if (r.abduction.vote.cr1 < 1.0)
        r.warnings.push_back("abduction vote split: cr1 = " + std::to_string(r.abduction.vote.cr1));

    Prediction fact = follow_chain(pi_a, chain, r.u_hat);
    r.y_factual = fact.value;
    r.factual = std::move(fact.trace);

    Scaffold pi_b = build_counterfactual(pi_a, chain, q.intervention, mix64(cfg.seed ^ 0xcf));
    if (!q.inject.empty()) {
        // Resolve hop indices against the intervened chain from u_hat.
        std::vector<RelationRecord> path;
        std::string cur = r.u_hat;
        const std::size_t target = chain.index_of(q.intervention.first);
        for (std::size_t i = 0; i < chain.mechanisms.size(); ++i) {
            const Mechanism& m = chain.mechanisms[i];
            std::string next;
            if (i + 1 == target) {
                next = q.intervention.second;
            } else {
                auto it = m.map.find(cur);
                if (it == m.map.end()) break;
                next = it->second;
            }
            path.push_back({pi_b.node(m.cause, cur), i, pi_b.node(m.effect, next)});
            cur = next;
        }
        std::vector<Injection> inj;
        for (const auto& i : q.inject) {
            if (i.hop >= path.size() || i.block >= cfg.n_blocks)
                throw Error(ErrorCode::ConfigInvalid, "injection hop or block out of range");
            inj.push_back({i.hop, i.block});
        }
        inject_collisions(pi_b.store, pi_b.keys, path, inj, cfg.seed);
    }

    Prediction cf = predict(pi_b, chain, r.u_hat);
    r.y_hat = cf.value;
    r.counterfactual = std::move(cf.trace);
    r.ratio = estimate(r.factual, r.counterfactual);
    if (r.factual.depth() != r.counterfactual.depth()) r.warnings.push_back("factual and counterfactual depths differ");
    r.factual_snapshot_after = pi_a.store.snapshot_bytes();
    return r;
}

} // namespace galmem
