#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "galmem/dag.hpp"
#include "galmem/qod.hpp"

using namespace galmem;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::ParseError;
}

// All root-to-depth paths by plain recursion over the edge list.
std::set<std::vector<std::uint64_t>> enumerate_paths(const std::vector<RelationRecord>& edges, std::uint64_t root,
                                                     std::size_t depth) {
    std::set<std::vector<std::uint64_t>> out;
    std::vector<std::uint64_t> path{root};
    std::function<void()> walk = [&] {
        if (path.size() == depth + 1) {
            out.insert(path);
            return;
        }
        for (const auto& e : edges)
            if (e.subject == path.back()) {
                path.push_back(e.object);
                walk();
                path.pop_back();
            }
    };
    walk();
    return out;
}

std::vector<DecayPoint> points_from(std::function<double(double)> f, int max_depth) {
    std::vector<DecayPoint> pts;
    for (int n = 1; n <= max_depth; ++n) pts.push_back({static_cast<std::size_t>(n), f(n), 1});
    return pts;
}

} // namespace

TEST(KeySpace, KeysAreBoundNodeAndLabel) {
    KeySpace ks(512, 3);
    EXPECT_EQ(ks.key(7, 1).bits(), bind(ks.node_hv(7), ks.label_hv(1)));
    EXPECT_NE(ks.key(7, 1), ks.key(7, 2));
    EXPECT_NE(ks.key(7, 1), ks.key(8, 1));
    EXPECT_EQ(ks.key(7, 1).length(), 512u);
}

TEST(GenerateDag, FullTreeShape) {
    const SyntheticDag dag = generate_dag({3, 4, 0, 0, 1}, 10);
    EXPECT_EQ(dag.edges.size(), 3u + 9 + 27 + 81);
    std::set<std::pair<std::uint64_t, std::uint64_t>> keys;
    std::set<std::uint64_t> objects;
    for (const auto& e : dag.edges) {
        EXPECT_LT(e.relation, 3u);
        EXPECT_EQ(e.object >> 40, (e.subject >> 40) + 1);
        keys.insert({e.subject, e.relation});
        objects.insert(e.object);
    }
    EXPECT_EQ(keys.size(), dag.edges.size());
    EXPECT_EQ(objects.size(), dag.edges.size());
    EXPECT_TRUE(dag.injections.empty());
}

TEST(GenerateDag, FixedWidthAndInjections) {
    const SyntheticDag dag = generate_dag({2, 3, 5, 1.0, 2}, 8);
    EXPECT_EQ(dag.edges.size(), 2u + 10 + 10);
    EXPECT_EQ(dag.injections.size(), dag.edges.size());
    for (const auto& inj : dag.injections) EXPECT_LT(inj.block, 8u);
    for (const auto& e : dag.edges) EXPECT_LT(e.object & ((std::uint64_t{1} << 40) - 1), 5u);
    EXPECT_EQ(code_of([] { generate_dag({0, 3, 0, 0, 0}, 4); }), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of([] { generate_dag({2, 3, 0, 1.5, 0}, 4); }), ErrorCode::ConfigInvalid);
}

namespace {

struct Birthday {
    double mean, var;
};

// Writes landing on an already used slot when n independent uniform keys go
// into M slots: n - occupied, with E[occupied] = M (1 - (1 - 1/M)^n).
Birthday birthday(double n, double M) {
    const double q1 = std::pow(1 - 1 / M, n), q2 = std::pow(1 - 2 / M, n);
    return {n - M * (1 - q1), M * (M - 1) * q2 + M * q1 - M * M * q1 * q1};
}

} // namespace

TEST(LoadEdges, IndependentKeysFollowBirthdayLaw) {
    const unsigned n_blocks = 16;
    const std::size_t dim = 64 * n_blocks;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, dim, CollisionPolicy::DontCare, 21));
    CounterRng rng(21);
    std::vector<std::uint64_t> per_block(n_blocks, 0);
    for (std::uint64_t i = 0; i < 10100; ++i)
        for (unsigned b : mem.write(random_polynomial(dim, rng), {i}).collided_blocks) ++per_block[b];
    const Birthday e = birthday(10100, 65536);
    double total = 0;
    for (auto c : per_block) {
        EXPECT_NEAR(static_cast<double>(c), e.mean, 5 * std::sqrt(e.var));
        total += static_cast<double>(c);
    }
    EXPECT_NEAR(total, n_blocks * e.mean, 4 * std::sqrt(n_blocks * e.var));
}

TEST(LoadEdges, DagKeysMatchBirthdayMean) {
    // Keys are node XOR label and addressing is affine, so the address of
    // (s, r) is a_s ^ b_r: a coincidence a_s ^ a_t = b_r ^ b_q makes both
    // (s,r)~(t,q) and (s,q)~(t,r) collide. Collisions come in pairs, which
    // doubles the variance but leaves the mean alone.
    const unsigned n_blocks = 16;
    const std::size_t dim = 64 * n_blocks;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, dim, CollisionPolicy::DontCare, 21));
    KeySpace keys(dim, 21);
    const SyntheticDag dag = generate_dag({100, 2, 0, 0, 21}, n_blocks);
    const LoadReport r = load_edges(mem, keys, dag.edges);
    ASSERT_EQ(r.writes, 10100u);
    const Birthday e = birthday(10100, 65536);
    EXPECT_NEAR(static_cast<double>(r.total_collisions()), n_blocks * e.mean, 4 * std::sqrt(2 * n_blocks * e.var));
}

TEST(LoadEdges, LengthMismatch) {
    BlockMemory mem(MemoryConfig::gated(4, 10, 256, CollisionPolicy::Rescue, 1));
    KeySpace keys(512, 1);
    EXPECT_EQ(code_of([&] { load_edges(mem, keys, {{1, 0, 2}}); }), ErrorCode::LengthMismatch);
}

TEST(Traverse, EnumeratesEveryPathWithoutCollisions) {
    const unsigned n_blocks = 8;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, 1024, CollisionPolicy::Rescue, 4));
    KeySpace keys(1024, 4);
    const SyntheticDag dag = generate_dag({3, 4, 0, 0, 4}, n_blocks);
    load_edges(mem, keys, dag.edges);
    const Traversal t = traverse(mem, keys, dag.root, {0, 1, 2}, 4, 1000);
    std::set<std::vector<std::uint64_t>> found;
    for (const auto& p : t.complete) {
        EXPECT_EQ(p.cr2, 1.0);
        EXPECT_TRUE(p.complete);
        found.insert(p.nodes());
    }
    EXPECT_EQ(found, enumerate_paths(dag.edges, dag.root, 4));
    EXPECT_TRUE(t.partial.empty());
}

TEST(Traverse, FixedWidthDagMatchesEnumeration) {
    BlockMemory mem(MemoryConfig::gated(8, 16, 1024, CollisionPolicy::Rescue, 5));
    KeySpace keys(1024, 5);
    const SyntheticDag dag = generate_dag({2, 5, 6, 0, 5}, 8);
    load_edges(mem, keys, dag.edges);
    const Traversal t = traverse(mem, keys, dag.root, {0, 1}, 5, 100);
    std::set<std::vector<std::uint64_t>> found;
    for (const auto& p : t.complete) found.insert(p.nodes());
    EXPECT_EQ(found, enumerate_paths(dag.edges, dag.root, 5));
}

TEST(Traverse, Cr2IsProductAndRankingIsOrdered) {
    const unsigned n_blocks = 10;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, 1280, CollisionPolicy::DontCare, 6));
    KeySpace keys(1280, 6);
    const SyntheticDag dag = generate_dag({2, 5, 0, 0.3, 6}, n_blocks);
    load_edges(mem, keys, dag.edges);
    inject_collisions(mem, keys, dag.edges, dag.injections, 6);
    const Traversal t = traverse(mem, keys, dag.root, {0, 1}, 5, 32);
    ASSERT_EQ(t.complete.size(), 32u);
    std::set<double> distinct;
    for (std::size_t i = 0; i < t.complete.size(); ++i) {
        const auto& p = t.complete[i];
        double prod = 1;
        for (const auto& h : p.hops) prod *= h.result.cr1;
        EXPECT_DOUBLE_EQ(p.cr2, prod);
        EXPECT_LE(p.cr2, 1.0);
        if (i) {
            EXPECT_FALSE(trace_rank_less(p, t.complete[i - 1]));
        }
        distinct.insert(p.cr2);
    }
    EXPECT_GT(distinct.size(), 1u);
    // winners are the stored children
    for (const auto& p : t.complete)
        for (std::size_t h = 0; h < p.hops.size(); ++h) {
            const auto& hop = p.hops[h];
            bool stored = false;
            for (const auto& e : dag.edges)
                stored |= e.subject == hop.node && e.relation == hop.relation && e.object == hop.result.winner->value;
            EXPECT_TRUE(stored);
        }
}

TEST(Traverse, InjectedEdgeLosesOneVote) {
    const unsigned n_blocks = 10;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, 1280, CollisionPolicy::DontCare, 7));
    KeySpace keys(1280, 7);
    const std::vector<RelationRecord> chain = {{1, 0, 2}, {2, 0, 3}, {3, 0, 4}};
    load_edges(mem, keys, chain);
    inject_collisions(mem, keys, chain, {{1, 4}}, 7);
    const Traversal t = traverse(mem, keys, 1, {0}, 3, 1);
    ASSERT_EQ(t.complete.size(), 1u);
    EXPECT_EQ(t.complete[0].nodes(), (std::vector<std::uint64_t>{1, 2, 3, 4}));
    EXPECT_DOUBLE_EQ(t.complete[0].hops[1].result.cr1, 0.9);
    EXPECT_DOUBLE_EQ(t.complete[0].cr2, 0.9);
}

TEST(Traverse, RescueKeepsFullConfidenceUnderInjection) {
    BlockMemory mem(MemoryConfig::gated(10, 16, 1280, CollisionPolicy::Rescue, 8));
    KeySpace keys(1280, 8);
    const SyntheticDag dag = generate_dag({2, 4, 0, 0.5, 8}, 10);
    load_edges(mem, keys, dag.edges);
    inject_collisions(mem, keys, dag.edges, dag.injections, 8);
    const Traversal t = traverse(mem, keys, dag.root, {0, 1}, 4, 16);
    ASSERT_EQ(t.complete.size(), 16u);
    for (const auto& p : t.complete) EXPECT_EQ(p.cr2, 1.0);
    EXPECT_EQ(effective_branching(t.complete), 1.0);
}

TEST(Traverse, PartialPathsAndEmptyFrontier) {
    BlockMemory mem(MemoryConfig::gated(4, 16, 512, CollisionPolicy::Rescue, 9));
    KeySpace keys(512, 9);
    load_edges(mem, keys, {{1, 0, 2}, {1, 1, 3}, {2, 0, 4}});
    const Traversal t = traverse(mem, keys, 1, {0, 1}, 2, 8);
    ASSERT_EQ(t.complete.size(), 1u);
    EXPECT_EQ(t.complete[0].nodes(), (std::vector<std::uint64_t>{1, 2, 4}));
    ASSERT_EQ(t.partial.size(), 1u);
    EXPECT_EQ(t.partial[0].nodes(), (std::vector<std::uint64_t>{1, 3}));
    EXPECT_FALSE(t.partial[0].complete);
    EXPECT_EQ(code_of([&] { traverse(mem, keys, 1, {0}, 3, 8); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { traverse(mem, keys, 1, {0}, 1, 0); }), ErrorCode::ConfigInvalid);
}

TEST(EffectiveBranching, Formula) {
    auto trace = [](double cr2, std::size_t depth) {
        PathTrace t;
        t.cr2 = cr2;
        t.hops.resize(depth);
        return t;
    };
    EXPECT_EQ(effective_branching({trace(1, 2), trace(1, 2), trace(1, 2), trace(1, 2)}), 1.0);
    // 2 classes among 4 traces of depth 2: (2/4) * 4^(1/2) = 1
    EXPECT_DOUBLE_EQ(effective_branching({trace(1, 2), trace(1, 2), trace(0.9, 2), trace(0.9, 2)}), 1.0);
    // 4 classes: 4/4 * 2 = 2
    EXPECT_DOUBLE_EQ(effective_branching({trace(1, 2), trace(0.9, 2), trace(0.8, 2), trace(0.7, 2)}), 2.0);
    EXPECT_EQ(code_of([] { effective_branching({}); }), ErrorCode::ConfigInvalid);
}

TEST(DecayFit, ExactGeometricDecay) {
    const double p = 0.9;
    const DecayFit f = decay_fit(points_from([&](double n) { return std::pow(p, n); }, 8));
    EXPECT_NEAR(f.slope, std::log(p), 1e-12);
    EXPECT_NEAR(f.intercept, 0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1, 1e-12);
    EXPECT_LT(f.ssr_multiplicative, 1e-20);
    EXPECT_TRUE(f.multiplicative_best());
}

TEST(DecayFit, AdditiveDataPrefersAdditiveModel) {
    const DecayFit f = decay_fit(points_from([](double n) { return 1 - 0.08 * n; }, 8));
    EXPECT_NEAR(f.additive_c, 0.08, 1e-12);
    EXPECT_LT(f.ssr_additive, 1e-20);
    EXPECT_FALSE(f.multiplicative_best());
}

TEST(DecayFit, PowerLawDataPrefersPowerModel) {
    const DecayFit f = decay_fit(points_from([](double n) { return 0.9 * std::pow(n, -0.7); }, 8));
    EXPECT_NEAR(f.power_a, 0.7, 1e-12);
    EXPECT_NEAR(f.power_c, 0.9, 1e-12);
    EXPECT_LT(f.ssr_power, 1e-20);
    EXPECT_FALSE(f.multiplicative_best());
}

TEST(DecayFit, DegenerateInputs) {
    EXPECT_EQ(code_of([] { decay_fit({{1, 0.9, 1}, {2, 0.8, 1}}); }), ErrorCode::DegenerateFit);
    EXPECT_EQ(code_of([] { decay_fit({{0, 1, 1}, {1, 0.9, 1}, {2, 0.8, 1}}); }), ErrorCode::DegenerateFit);
    EXPECT_EQ(code_of([] { decay_fit({{1, 0.9, 1}, {2, 0.0, 1}, {3, 0.7, 1}}); }), ErrorCode::DegenerateFit);
    EXPECT_EQ(code_of([] { decay_fit({{1, 0.9, 1}, {1, 0.8, 1}, {3, 0.7, 1}}); }), ErrorCode::DegenerateFit);
}

TEST(ChainSimulation, MatchesProductOfProbabilities) {
    const std::vector<double> p = {0.95, 0.9, 0.85, 0.97, 0.8, 0.9};
    const std::uint64_t trials = 200000;
    const auto pts = simulate_chain_success(p, trials, 3);
    double prod = 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        prod *= p[i];
        EXPECT_NEAR(pts[i].mean_cr2, prod, 4 * std::sqrt(prod * (1 - prod) / trials)) << i;
    }
    EXPECT_EQ(simulate_chain_success(p, 10000, 3)[5].mean_cr2, simulate_chain_success(p, 10000, 3)[5].mean_cr2);
}

TEST(DecayCsv, Format) {
    const std::string s = decay_csv({{1, 0.5, 10}});
    EXPECT_EQ(s.substr(0, s.find('\n')), "depth,mean_cr2,log_mean_cr2,n_traces");
    EXPECT_NE(s.find("1,0.5,-0.69314718055994529,10"), std::string::npos) << s;
}

TEST(EdgeText, RoundTripAndErrors) {
    const std::vector<RelationRecord> edges = {{1, 0, 2}, {2, 5, 18446744073709551615ull}};
    std::istringstream in(format_edges(edges) + "\n");
    EXPECT_EQ(parse_edges(in), edges);

    std::istringstream bad("1\t0\t2\n1\tx\t3\n");
    try {
        parse_edges(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream short_line("1\t2\n");
    EXPECT_EQ(code_of([&] { parse_edges(short_line); }), ErrorCode::ParseError);
    std::istringstream overflow("1\t0\t99999999999999999999\n");
    EXPECT_EQ(code_of([&] { parse_edges(overflow); }), ErrorCode::ParseError);
}
