#pragma once

// galmem command-line front end. Every subcommand writes its artifacts plus a
// manifest.json (arguments, resolved config, seed, output SHA-256 digests)
// into --out; `replay` re-runs a manifest and compares digests.
//
// Exit codes: 0 success, 1 invariant failure, 2 usage.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "galmem/galmem.hpp"

namespace galmem::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "galmem 0.1.0";

enum Exit : int { kOk = 0, kInvariant = 1, kUsage = 2 };

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return std::move(os).str();
}

/// Artifact sink for one run. Digests are keyed by file name (sorted).
class Output {
public:
    explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, std::string_view content) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::ConfigInvalid, "cannot write " + (dir_ / name).string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        digests_[name] = sha256_hex(content);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    const fs::path& dir() const noexcept { return dir_; }
    const std::map<std::string, std::string>& digests() const noexcept { return digests_; }

private:
    fs::path dir_;
    std::map<std::string, std::string> digests_;
};

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline json vote_json(const VoteResult& v) {
    return {{"winner", v.winner ? json(v.winner->value) : json(nullptr)},
            {"votes_for_winner", v.votes_for_winner},
            {"abstentions", v.abstentions},
            {"other_votes", v.other_votes},
            {"cr1", v.cr1},
            {"rescued", v.rescued}};
}

inline json trace_json(const PathTrace& t) {
    json hops = json::array();
    for (const auto& h : t.hops)
        hops.push_back({{"from", h.node}, {"relation", h.relation}, {"to", h.result.winner->value}, {"vote", vote_json(h.result)}});
    return {{"start", t.start}, {"nodes", t.nodes()}, {"cr2", t.cr2}, {"complete", t.complete}, {"hops", hops}};
}

/// Recomputes cr2 from the hop log in hop order.
inline double hop_product(const PathTrace& t) {
    double p = 1.0;
    for (const auto& h : t.hops) p *= h.result.cr1;
    return p;
}

inline Generator resolve_generator(std::optional<unsigned> m, const std::string& g) {
    if (!g.empty()) {
        Generator gen = parse_generator(g);
        if (m && *m != gen.degree()) throw Error(ErrorCode::ConfigInvalid, "--m disagrees with the degree of --G");
        return gen;
    }
    if (!m) throw Error(ErrorCode::ConfigInvalid, "one of --m or --G is required");
    return builtin_generator(*m);
}

inline CollisionPolicy parse_rr(const std::string& s) {
    if (s == "rescue") return CollisionPolicy::Rescue;
    if (s == "dontcare") return CollisionPolicy::DontCare;
    throw Error(ErrorCode::ConfigInvalid, "--rr must be rescue or dontcare");
}

inline Schedule parse_schedule(const std::string& s) {
    if (s == "unified") return Schedule::Unified;
    if (s == "gated") return Schedule::Gated;
    throw Error(ErrorCode::ConfigInvalid, "--schedule must be unified or gated");
}

/// "1..6" or "1,2,5".
inline std::vector<std::size_t> parse_depths(const std::string& s) {
    std::vector<std::size_t> out;
    try {
        if (auto dots = s.find(".."); dots != std::string::npos) {
            const std::size_t a = std::stoul(s.substr(0, dots)), b = std::stoul(s.substr(dots + 2));
            if (a == 0 || b < a || b > 64) throw Error(ErrorCode::ConfigInvalid, "bad depth range " + s);
            for (std::size_t d = a; d <= b; ++d) out.push_back(d);
        } else {
            std::stringstream ss(s);
            for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoul(item));
        }
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::ConfigInvalid, "cannot parse depths '" + s + "'");
    }
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "empty depth list");
    for (auto d : out)
        if (d == 0) throw Error(ErrorCode::ConfigInvalid, "depths start at 1");
    return out;
}

// ---- qod ---------------------------------------------------------------------------

struct QodOptions {
    std::optional<unsigned> m;
    std::string generator;
    std::optional<std::size_t> length;
    double epsilon = 0.25;
    std::uint64_t samples = 100000;
    std::uint64_t seed = 1;
    bool exhaustive = false;
};

inline int cmd_qod(const QodOptions& o, Output& out, json& config, std::ostream& log) {
    const Generator g = resolve_generator(o.m, o.generator);
    const unsigned m = g.degree();
    if (!g.primitive_verified()) throw Error(ErrorCode::UnverifiedGenerator, format_generator(g) + " is not primitive");
    const std::size_t length = o.length.value_or(2 * m);
    config = {{"generator", format_generator(g)}, {"m", m}, {"L", length}, {"epsilon", o.epsilon},
              {"samples", o.samples}, {"exhaustive", o.exhaustive}};

    bool ok = true;
    json report;
    report["generator"] = format_generator(g);
    report["m"] = m;
    const HwMoments closed = hw_moments_closed_form(m);
    report["closed_form"] = {{"mean", closed.mean.str()}, {"mean_value", closed.mean.value()}, {"variance", closed.variance}};

    if (m <= kMaxHistogramDegree) {
        const WeightHistogram h = hw_distribution_exact(g);
        std::string csv = "weight,count\n";
        for (unsigned w = 0; w <= m; ++w) csv += std::to_string(w) + "," + std::to_string(h.counts[w]) + "\n";
        out.write("qod_histogram.csv", csv);
        bool binomial = h.counts[0] == 0;
        std::uint64_t c = 1;
        for (unsigned w = 1; w <= m; ++w) {
            c = c * (m - w + 1) / w;
            binomial = binomial && h.counts[w] == c;
        }
        ok = ok && binomial;
        report["histogram"] = h.counts;
        report["total"] = h.total;
        report["mean"] = h.mean().str();
        report["mean_value"] = h.mean().value();
        report["variance"] = h.variance();
        report["variance_exact"] = h.variance_exact().str();
        report["binomial_law"] = binomial;
    }

    const QodReport q = o.exhaustive ? concentration_exact(g, o.epsilon) : concentration_check(g, length, o.epsilon, o.samples, o.seed);
    report["concentration"] = {{"mode", q.exhaustive ? "exhaustive" : "sampled"},
                               {"L", q.length},
                               {"samples", q.samples},
                               {"rejected", q.rejected},
                               {"rng_seed", q.rng_seed},
                               {"epsilon", q.epsilon},
                               {"mean", q.mean},
                               {"variance", q.variance},
                               {"empirical_tail", q.empirical_tail},
                               {"exact_tail", q.exact_tail},
                               {"hoeffding_bound", q.hoeffding_bound},
                               {"slack", q.slack},
                               {"within_bound", q.within_bound()}};
    ok = ok && q.within_bound();
    report["invariants_ok"] = ok;
    out.write_json("qod_report.json", report);
    log << "qod " << format_generator(g) << " mean " << report.value("mean", closed.mean.str()) << " tail "
        << q.empirical_tail << " bound " << q.hoeffding_bound << (ok ? "" : "  INVARIANT FAILED") << "\n";
    return ok ? kOk : kInvariant;
}

// ---- rsp-compare -------------------------------------------------------------------

struct RspOptions {
    std::optional<unsigned> m;
    std::string generator;
    std::optional<std::size_t> length;
    std::size_t k = 5;
    std::uint64_t trials = 10000;
    std::uint64_t seed = 1;
};

inline int cmd_rsp(const RspOptions& o, Output& out, json& config, std::ostream& log) {
    const Generator g = resolve_generator(o.m, o.generator);
    const unsigned m = g.degree();
    const std::size_t length = o.length.value_or((std::size_t{1} << m) - 1);
    if (o.k == 0 || o.k > length) throw Error(ErrorCode::ConfigInvalid, "--k must be in [1, L]");
    config = {{"generator", format_generator(g)}, {"m", m}, {"L", length}, {"k", o.k}, {"trials", o.trials}};

    const WorstCaseComparison wc = compare_worst_case(g, o.k, length, o.trials, o.seed);
    std::string csv = "j,psi_weight,rsp_max_distance\n";
    for (const auto& r : wc.rows)
        csv += std::to_string(r.j) + "," + std::to_string(r.psi_weight) + "," + std::to_string(r.rsp_max_distance) + "\n";
    out.write("rsp_worst_case.csv", csv);

    json grid = json::array();
    for (std::size_t d : {std::size_t{1}, length / 5, length}) {
        const RspMonteCarlo mc = rsp_monte_carlo(m, length, o.k, d, o.trials, o.seed);
        const double sigma = std::sqrt(mc.variance / static_cast<double>(mc.trials));
        const double expected = rsp_expected_distance(m, length, o.k, d);
        grid.push_back({{"d", d},
                        {"mc_mean", mc.mean},
                        {"mc_sigma", sigma},
                        {"expected", expected},
                        {"exact_hypergeometric", rsp_exact_expected_distance(m, length, o.k, d)},
                        {"within_3sigma", std::abs(mc.mean - expected) <= 3 * sigma}});
    }
    const bool psi_ok = wc.psi_min >= 1;
    const bool rsp_ok = wc.rsp_max <= o.k;
    json report = {{"generator", format_generator(g)},
                   {"L", length},
                   {"k", o.k},
                   {"trials", o.trials},
                   {"rng_seed", o.seed},
                   {"psi_mean", wc.psi_mean},
                   {"psi_min", wc.psi_min},
                   {"rsp_max", wc.rsp_max},
                   {"rsp_rows_above_k", wc.rsp_rows_above_k},
                   {"psi_weight_at_least_1", psi_ok},
                   {"rsp_distance_at_most_k", rsp_ok},
                   {"monte_carlo", grid}};
    out.write_json("rsp_report.json", report);
    log << "rsp-compare psi mean " << wc.psi_mean << " min " << wc.psi_min << ", rsp max " << wc.rsp_max << " (k = " << o.k
        << ")" << (psi_ok && rsp_ok ? "" : "  INVARIANT FAILED") << "\n";
    return psi_ok && rsp_ok ? kOk : kInvariant;
}

// ---- memory construction shared by bench and snapshot ----------------------------------

struct StoreOptions {
    std::optional<unsigned> n_blocks;
    unsigned m = 16;
    std::string rr = "dontcare";
    std::string schedule = "gated";
    std::size_t dimension = 0;  // 0: 64 bits per block
    std::uint64_t seed = 1;
    bool rescue_always = false;
};

inline MemoryConfig make_config(const StoreOptions& o, unsigned n_blocks) {
    const std::size_t dim = o.dimension ? o.dimension : std::size_t{64} * n_blocks;
    const CollisionPolicy rr = parse_rr(o.rr);
    MemoryConfig c = parse_schedule(o.schedule) == Schedule::Unified
                         ? MemoryConfig::unified(n_blocks, primitive_generators(o.m, 1).front(),
                                                 Residue{mix64(o.seed) & ((std::uint64_t{1} << o.m) - 1)}, dim, rr)
                         : MemoryConfig::gated(n_blocks, o.m, dim, rr, o.seed);
    c.rescue_always = o.rescue_always;
    return c;
}

inline json store_json(const MemoryConfig& c) {
    json gens = json::array(), seeds = json::array();
    for (unsigned b = 0; b < c.n_blocks; ++b) {
        gens.push_back(format_generator(c.generators[b]));
        seeds.push_back(c.seeds[b].bits);
    }
    return {{"n_blocks", c.n_blocks}, {"m", c.address_bits}, {"L", c.input_length},
            {"rr", to_string(c.rr_mode)}, {"schedule", to_string(c.schedule)}, {"rescue_always", c.rescue_always},
            {"generators", gens}, {"seeds", seeds}};
}

inline json load_json(const LoadReport& r) {
    return {{"writes", r.writes}, {"collided_writes", r.collided_writes}, {"collisions_per_block", r.collisions_per_block},
            {"poisoned_slots", r.poisoned_slots}, {"rescued_entries", r.rescued_entries}};
}

// ---- bench --------------------------------------------------------------------------

struct BenchOptions {
    StoreOptions store;
    unsigned branching = 2;
    unsigned depth = 3;
    std::uint64_t width = 0;
    std::size_t fs = 8;
    double inject = 0;
    std::optional<double> p;
    std::string depths;
};

inline int cmd_bench(const BenchOptions& o, Output& out, json& config, std::ostream& log) {
    SyntheticDag dag;
    unsigned n_blocks = o.store.n_blocks.value_or(16);
    unsigned branching = o.branching;
    std::vector<std::size_t> depths = parse_depths(o.depths.empty() ? "1.." + std::to_string(o.depth) : o.depths);
    const std::size_t max_depth = *std::max_element(depths.begin(), depths.end());

    if (o.p) {
        // Geometric mode: an unbranched chain where every hop loses exactly
        // (1-p)N blocks to forced collisions, so each hop reads cr1 = p.
        const double p = *o.p;
        n_blocks = o.store.n_blocks.value_or(10);
        const double lost = (1.0 - p) * n_blocks;
        if (!(p > 0 && p <= 1) || std::abs(lost - std::round(lost)) > 1e-9)
            throw Error(ErrorCode::ConfigInvalid, "--p needs (1-p)*N to be a whole number of blocks");
        branching = 1;
        dag = generate_dag({1, static_cast<unsigned>(max_depth), 0, 0, o.store.seed}, n_blocks);
        for (std::size_t e = 0; e < dag.edges.size(); ++e)
            for (unsigned b = 0; b < static_cast<unsigned>(std::lround(lost)); ++b) dag.injections.push_back({e, b});
    } else {
        dag = generate_dag({o.branching, static_cast<unsigned>(std::max<std::size_t>(o.depth, max_depth)), o.width, o.inject, o.store.seed},
                           n_blocks);
    }

    BlockMemory mem(make_config(o.store, n_blocks));
    const KeySpace keys(mem.config().input_length, o.store.seed);
    config = {{"store", store_json(mem.config())}, {"branching", branching}, {"depth", o.depth}, {"width", o.width},
              {"fs", o.fs}, {"inject", o.inject}, {"depths", depths}, {"p", o.p ? json(*o.p) : json(nullptr)}};

    const LoadReport loaded = load_edges(mem, keys, dag.edges);
    const LoadReport injected = inject_collisions(mem, keys, dag.edges, dag.injections, o.store.seed);

    std::vector<std::uint64_t> candidates(branching);
    for (unsigned r = 0; r < branching; ++r) candidates[r] = r;

    bool ok = true;
    std::vector<PathTrace> all;
    std::optional<Traversal> deepest;
    json per_depth = json::array();
    for (std::size_t d : depths) {
        try {
            Traversal t = traverse(mem, keys, dag.root, candidates, d, o.fs);
            for (const auto& tr : t.complete) {
                if (hop_product(tr) != tr.cr2) ok = false;
                all.push_back(tr);
            }
            per_depth.push_back({{"depth", d}, {"complete", t.complete.size()}, {"partial", t.partial.size()}});
            if (d == max_depth) deepest = std::move(t);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotFound) throw;
            per_depth.push_back({{"depth", d}, {"complete", 0}, {"error", e.what()}});
        }
    }

    const auto points = group_by_depth(all);
    out.write("decay.csv", decay_csv(points));

    json fit_json = nullptr;
    std::optional<DecayFit> fit;
    try {
        fit = decay_fit(points);
        fit_json = {{"slope", fit->slope}, {"intercept", fit->intercept}, {"r_squared", fit->r_squared},
                    {"ssr_multiplicative", fit->ssr_multiplicative}, {"ssr_additive", fit->ssr_additive},
                    {"ssr_power", fit->ssr_power}, {"additive_c", fit->additive_c}, {"power_c", fit->power_c},
                    {"power_a", fit->power_a}};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateFit) throw;
        fit_json = {{"error", e.what()}};
    }

    json ranking = json::array();
    std::optional<double> beff;
    if (deepest && !deepest->complete.empty()) {
        for (std::size_t i = 0; i < deepest->complete.size(); ++i) {
            json t = trace_json(deepest->complete[i]);
            t["rank"] = i + 1;
            ranking.push_back(std::move(t));
        }
        beff = effective_branching(deepest->complete);
    }

    const bool rescue = mem.config().rr_mode == CollisionPolicy::Rescue;
    if (rescue)
        for (const auto& t : all) ok = ok && t.cr2 == 1.0;
    if (o.p && !rescue) ok = ok && fit && std::abs(fit->slope - std::log(*o.p)) <= 1e-9;

    json report = {{"root", dag.root},
                   {"edges", dag.edges.size()},
                   {"injections", dag.injections.size()},
                   {"load", load_json(loaded)},
                   {"inject", load_json(injected)},
                   {"depths", per_depth},
                   {"fit", fit_json},
                   {"effective_branching", beff ? json(*beff) : json(nullptr)},
                   {"ranking", ranking},
                   {"partial", deepest ? deepest->partial.size() : 0},
                   {"invariants_ok", ok}};
    out.write_json("ranking.json", report);
    log << "bench " << dag.edges.size() << " edges, " << all.size() << " complete traces";
    if (fit) log << ", slope " << fmt(fit->slope) << " r2 " << fit->r_squared;
    if (beff) log << ", effective branching " << *beff;
    log << (ok ? "" : "  INVARIANT FAILED") << "\n";
    return ok ? kOk : kInvariant;
}

// ---- hdc-demo -------------------------------------------------------------------------

struct HdcOptions {
    std::size_t dimension = 1024;
    std::uint64_t seed = 1;
    std::uint64_t trials = 1;
};

inline int cmd_hdc(const HdcOptions& o, Output& out, json& config, std::ostream& log) {
    if (o.trials == 0) throw Error(ErrorCode::ConfigInvalid, "--trials must be positive");
    config = {{"dimension", o.dimension}, {"trials", o.trials}};
    json rows = json::array();
    bool ok = true;
    std::uint64_t recovered = 0;
    double fraction_sum = 0;
    for (std::uint64_t t = 0; t < o.trials; ++t) {
        const SentenceDemo d = sentence_demo(o.dimension, mix64(o.seed + t));
        ok = ok && d.passed();
        recovered += d.passed();
        fraction_sum += d.repr_fraction;
        json q1 = json::array(), q2 = json::array();
        for (int i = 0; i < 3; ++i) {
            q1.push_back({{"filler", d.first[i].name}, {"distance", d.first[i].distance}});
            q2.push_back({{"filler", d.second[i].name}, {"distance", d.second[i].distance}});
        }
        rows.push_back({{"seed", d.seed}, {"repr_distance", d.repr_distance}, {"repr_fraction", d.repr_fraction},
                        {"dog_bit_man", q1}, {"man_bit_dog", q2}, {"passed", d.passed()}});
    }
    out.write_json("hdc_demo.json", {{"dimension", o.dimension}, {"rng_seed", o.seed}, {"roles", {"Subj", "Verb", "Obj"}},
                                     {"trials", rows}, {"recovered", recovered},
                                     {"mean_repr_fraction", fraction_sum / static_cast<double>(o.trials)}});
    log << "hdc-demo " << recovered << "/" << o.trials << " trials recovered all fillers, mean Repr distance "
        << fraction_sum / static_cast<double>(o.trials) << (ok ? "" : "  INVARIANT FAILED") << "\n";
    return ok ? kOk : kInvariant;
}

// ---- cf ----------------------------------------------------------------------------------

inline CounterfactualQuery parse_query(const json& j) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ParseError, "query: " + what); };
    if (!j.is_object()) fail("top level must be an object");
    CounterfactualQuery q;
    try {
        for (const auto& [k, v] : j.at("evidence").items()) q.evidence[k] = v.get<std::string>();
        const auto& iv = j.at("intervention");
        if (!iv.is_object() || iv.size() != 1) fail("intervention must hold exactly one variable");
        q.intervention = {iv.begin().key(), iv.begin().value().get<std::string>()};
        for (const auto& m : j.at("mechanisms")) {
            Mechanism mech{m.at("cause").get<std::string>(), m.at("effect").get<std::string>(), {}};
            for (const auto& [k, v] : m.at("map").items()) mech.map[k] = v.get<std::string>();
            q.mechanisms.push_back(std::move(mech));
        }
        if (j.contains("background")) {
            const auto& b = j["background"];
            if (b.is_string()) {
                q.background = b.get<std::string>();
            } else {
                q.background = b.at("variable").get<std::string>();
                if (b.contains("values")) q.background_values = b["values"].get<std::vector<std::string>>();
            }
        }
        if (j.contains("outcome")) q.outcome = j["outcome"].get<std::string>();
        if (j.contains("config")) {
            const auto& c = j["config"];
            q.config.n_blocks = c.value("n_blocks", q.config.n_blocks);
            q.config.address_bits = c.value("m", q.config.address_bits);
            q.config.dimension = c.value("dimension", std::size_t{0});
            if (q.config.dimension == 0) q.config.dimension = std::size_t{128} * q.config.n_blocks;
            q.config.rr_mode = parse_rr(c.value("rr", std::string("rescue")));
            q.config.seed = c.value("seed", q.config.seed);
        }
        if (j.contains("inject"))
            for (const auto& i : j["inject"]) q.inject.push_back({i.at("hop").get<std::size_t>(), i.value("block", 0u)});
    } catch (const json::exception& e) {
        fail(e.what());
    }
    return q;
}

struct CfOptions {
    std::string query;
    std::optional<std::uint64_t> seed;
};

inline int cmd_cf(const CfOptions& o, Output& out, json& config, std::ostream& log) {
    const std::string text = read_file(o.query);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, "malformed query JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    CounterfactualQuery q = parse_query(j);
    if (o.seed) q.config.seed = *o.seed;
    config = {{"query", j}, {"query_sha256", sha256_hex(text)}, {"seed", q.config.seed}};

    const CounterfactualResult r = run_counterfactual(q);
    const double quotient = hop_product(r.counterfactual) / hop_product(r.factual);
    const bool snapshots_equal = r.factual_snapshot_before == r.factual_snapshot_after;
    const bool ok = snapshots_equal && quotient == r.ratio;
    json response = {{"u_hat", r.u_hat},
                     {"y_hat", r.y_hat},
                     {"ratio", r.ratio},
                     {"factual_cr2", r.factual.cr2},
                     {"counterfactual_cr2", r.counterfactual.cr2},
                     {"y_factual", r.y_factual},
                     {"abduction", vote_json(r.abduction.vote)},
                     {"factual_trace", trace_json(r.factual)},
                     {"counterfactual_trace", trace_json(r.counterfactual)},
                     {"recomputed_quotient", quotient},
                     {"factual_snapshot_sha256", sha256_hex(r.factual_snapshot_after)},
                     {"factual_snapshot_unchanged", snapshots_equal},
                     {"warnings", r.warnings}};
    out.write_json("cf_response.json", response);
    log << "cf u_hat " << r.u_hat << ", y_hat " << r.y_hat << ", ratio " << fmt(r.ratio) << (ok ? "" : "  INVARIANT FAILED") << "\n";
    for (const auto& w : r.warnings) log << "warning: " << w << "\n";
    return ok ? kOk : kInvariant;
}

// ---- snapshot ---------------------------------------------------------------------------

struct SnapshotOptions {
    StoreOptions store;
    std::string edges;     // TSV file; empty uses a synthetic DAG
    unsigned branching = 2;
    unsigned depth = 3;
    std::string inspect;   // existing snapshot to summarize instead
};

inline json memory_summary(const BlockMemory& mem) {
    json blocks = json::array();
    for (unsigned b = 0; b < mem.n_blocks(); ++b) {
        const auto c = mem.slot_counts(b);
        blocks.push_back({{"empty", c.empty}, {"holds", c.holds}, {"poisoned", c.poisoned}});
    }
    return {{"config", store_json(mem.config())}, {"blocks", blocks}, {"rescue_entries", mem.rescue_entries()}};
}

inline int cmd_snapshot(const SnapshotOptions& o, Output& out, json& config, std::ostream& log) {
    if (!o.inspect.empty()) {
        std::ifstream in(o.inspect, std::ios::binary);
        if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + o.inspect);
        const BlockMemory mem = BlockMemory::load(in);
        config = {{"inspect", o.inspect}};
        json s = memory_summary(mem);
        s["sha256"] = sha256_hex(mem.snapshot_bytes());
        out.write_json("snapshot.json", s);
        log << "snapshot " << o.inspect << ": " << mem.n_blocks() << " blocks, " << mem.rescue_entries() << " rescue entries\n";
        return kOk;
    }
    std::vector<RelationRecord> edges;
    if (!o.edges.empty()) {
        std::istringstream in(read_file(o.edges));
        edges = parse_edges(in);
    } else {
        edges = generate_dag({o.branching, o.depth, 0, 0, o.store.seed}, 1).edges;
    }
    BlockMemory mem(make_config(o.store, o.store.n_blocks.value_or(16)));
    const KeySpace keys(mem.config().input_length, o.store.seed);
    const LoadReport r = load_edges(mem, keys, edges);
    config = {{"store", store_json(mem.config())}, {"edges", o.edges}, {"branching", o.branching}, {"depth", o.depth}};

    const std::string bytes = mem.snapshot_bytes();
    out.write("memory.gmem", bytes);
    std::istringstream in(bytes);
    const bool roundtrip = BlockMemory::load(in).snapshot_bytes() == bytes;
    json s = memory_summary(mem);
    s["load"] = load_json(r);
    s["roundtrip_identical"] = roundtrip;
    out.write_json("snapshot.json", s);
    log << "snapshot " << edges.size() << " edges, " << bytes.size() << " bytes" << (roundtrip ? "" : "  INVARIANT FAILED") << "\n";
    return roundtrip ? kOk : kInvariant;
}

// ---- dispatch ---------------------------------------------------------------------------

inline json manifest_json(const std::string& sub, const std::vector<std::string>& args, const json& config,
                          std::optional<std::uint64_t> seed, const Output& out) {
    return {{"subcommand", sub},
            {"args", args},
            {"config", config},
            {"rng_seed", seed ? json(*seed) : json(nullptr)},
            {"tool_version", kToolVersion},
            {"outputs", out.digests()}};
}

int run(std::vector<std::string> args, std::ostream& log, std::ostream& err);

/// Re-executes a manifest's arguments into a fresh directory and compares
/// every recorded digest.
inline int cmd_replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& log, std::ostream& err) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, "malformed manifest at byte " + std::to_string(e.byte));
    }
    std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
    const fs::path dir = out_dir.empty() ? fs::path(manifest_path).parent_path() / "replay" : fs::path(out_dir);
    args.insert(args.begin(), {m.at("subcommand").get<std::string>(), "--out", dir.string()});
    std::ostringstream inner;
    const int code = run(args, inner, err);
    if (code == kUsage) return code;
    bool same = true;
    for (const auto& [name, digest] : m.at("outputs").items()) {
        const fs::path p = dir / name;
        const bool match = fs::exists(p) && sha256_hex(read_file(p)) == digest.get<std::string>();
        if (!match) err << "replay: " << name << " differs\n";
        same = same && match;
    }
    log << "replay " << m.at("subcommand").get<std::string>() << ": " << (same ? "all outputs identical" : "OUTPUTS DIFFER") << "\n";
    return same ? kOk : kInvariant;
}

/// args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& log, std::ostream& err) {
    CLI::App app{"galmem: deterministic Galois-field hyperdimensional memory"};
    app.require_subcommand(1);
    std::string out_dir = ".";

    QodOptions qo;
    auto* qod = app.add_subcommand("qod", "Hamming-weight statistics of the diffusion map");
    qod->add_option("--m", qo.m, "field degree (uses the built-in generator)");
    qod->add_option("--G", qo.generator, "generator as g:<hex>");
    qod->add_option("--L", qo.length, "input length for sampling (default 2m)");
    qod->add_option("--epsilon", qo.epsilon);
    qod->add_option("--samples", qo.samples);
    qod->add_option("--seed", qo.seed);
    qod->add_flag("--exhaustive", qo.exhaustive, "enumerate every nonzero residue instead of sampling");

    RspOptions ro;
    auto* rsp = app.add_subcommand("rsp-compare", "diffusion vs random sparse projection at single-bit flips");
    rsp->add_option("--m", ro.m);
    rsp->add_option("--G", ro.generator);
    rsp->add_option("--L", ro.length, "input length (default 2^m - 1)");
    rsp->add_option("--k", ro.k, "ones per projection row");
    rsp->add_option("--trials", ro.trials);
    rsp->add_option("--seed", ro.seed);

    auto add_store = [](CLI::App* sub, StoreOptions& s) {
        sub->add_option("--n-blocks,-N", s.n_blocks);
        sub->add_option("--m", s.m, "address bits per block");
        sub->add_option("--rr", s.rr, "rescue | dontcare");
        sub->add_option("--schedule", s.schedule, "unified | gated");
        sub->add_option("--dim", s.dimension, "key length in bits (default 64 per block)");
        sub->add_option("--seed", s.seed);
        sub->add_flag("--rescue-always", s.rescue_always);
    };

    BenchOptions bo;
    auto* bench = app.add_subcommand("bench", "synthetic DAG: load, traverse, fit decay");
    add_store(bench, bo.store);
    bench->add_option("--branching,-b", bo.branching);
    bench->add_option("--depth", bo.depth);
    bench->add_option("--width", bo.width, "nodes per level (0: full tree)");
    bench->add_option("--fs", bo.fs, "frontier size");
    bench->add_option("--inject", bo.inject, "fraction of edges given a forced block collision");
    bench->add_option("--p", bo.p, "geometric mode: per-hop confidence on an unbranched chain");
    bench->add_option("--depths", bo.depths, "e.g. 1..6 or 1,2,4");

    HdcOptions ho;
    auto* hdc = app.add_subcommand("hdc-demo", "role-filler sentence swap");
    hdc->add_option("--dim", ho.dimension);
    hdc->add_option("--seed", ho.seed);
    hdc->add_option("--trials", ho.trials);

    CfOptions co;
    auto* cf = app.add_subcommand("cf", "counterfactual query from a JSON file");
    cf->add_option("query", co.query)->required();
    cf->add_option("--seed", co.seed);

    SnapshotOptions so;
    auto* snap = app.add_subcommand("snapshot", "build a memory from edges and save its binary image");
    add_store(snap, so.store);
    snap->add_option("--edges", so.edges, "subject<TAB>relation<TAB>object file");
    snap->add_option("--branching,-b", so.branching);
    snap->add_option("--depth", so.depth);
    snap->add_option("--inspect", so.inspect, "summarize an existing snapshot");

    std::string manifest_path, replay_out;
    auto* replay = app.add_subcommand("replay", "re-run a manifest and compare output digests");
    replay->add_option("manifest", manifest_path)->required();
    replay->add_option("--into", replay_out, "directory for the replayed outputs");

    for (auto* sub : {qod, rsp, bench, hdc, cf, snap}) sub->add_option("--out,-o", out_dir, "output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        log << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        log << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage: " << e.what() << "\n";
        return kUsage;
    }

    // Recorded arguments omit --out so a replay can redirect it.
    std::vector<std::string> recorded;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--out" || args[i] == "-o") {
            ++i;
            continue;
        }
        if (args[i].rfind("--out=", 0) == 0) continue;
        recorded.push_back(args[i]);
    }

    try {
        if (replay->parsed()) return cmd_replay(manifest_path, replay_out, log, err);
        Output out(out_dir);
        json config;
        int code = kOk;
        std::optional<std::uint64_t> seed;
        std::string name;
        if (qod->parsed()) {
            name = "qod";
            if (!qo.m && qo.generator.empty()) {
                err << "usage: qod needs --m or --G\n";
                return kUsage;
            }
            code = cmd_qod(qo, out, config, log);
            seed = qo.seed;
        } else if (rsp->parsed()) {
            name = "rsp-compare";
            if (!ro.m && ro.generator.empty()) {
                err << "usage: rsp-compare needs --m or --G\n";
                return kUsage;
            }
            code = cmd_rsp(ro, out, config, log);
            seed = ro.seed;
        } else if (bench->parsed()) {
            name = "bench";
            code = cmd_bench(bo, out, config, log);
            seed = bo.store.seed;
        } else if (hdc->parsed()) {
            name = "hdc-demo";
            code = cmd_hdc(ho, out, config, log);
            seed = ho.seed;
        } else if (cf->parsed()) {
            name = "cf";
            code = cmd_cf(co, out, config, log);
            seed = config.at("seed").get<std::uint64_t>();
        } else if (snap->parsed()) {
            name = "snapshot";
            code = cmd_snapshot(so, out, config, log);
            seed = so.store.seed;
        }
        out.write_json("manifest.json", manifest_json(name, recorded, config, seed, out));
        return code;
    } catch (const Error& e) {
        err << "galmem: " << to_string(e.code()) << ": " << e.what() << "\n";
        switch (e.code()) {
        case ErrorCode::ParseError:
        case ErrorCode::ConfigInvalid:
        case ErrorCode::DegreeTooLarge:
        case ErrorCode::UnverifiedGenerator:
        case ErrorCode::LengthMismatch:
            return kUsage;
        default:
            return kInvariant;
        }
    } catch (const std::exception& e) {
        err << "galmem: " << e.what() << "\n";
        return kInvariant;
    }
}

} // namespace galmem::cli
