// Acceptance harness: one PASS/FAIL line per criterion.
//   acceptance        run all
//   acceptance N      run criterion N only
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "commands.hpp"
#include "galmem/galmem.hpp"

using namespace galmem;
namespace fs = std::filesystem;
using galmem::cli::json;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [FAILED]");
    }
};

std::string num(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t choose(unsigned n, unsigned k) {
    std::uint64_t c = 1;
    for (unsigned i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("galmem_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// 1. exact moments at m = 10 through the qod command
Verdict exact_moments() {
    Verdict v;
    const fs::path dir = scratch("c1");
    std::ostringstream log, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli::run({"qod", "--m", "10", "--exhaustive", "--out", dir.string()}, log, err);
    const double secs = seconds_since(t0);
    v.require(code == 0, "qod exit " + std::to_string(code));
    std::ifstream in(dir / "qod_report.json");
    const json rep = json::parse(in);
    const std::string mean = rep.at("mean").get<std::string>();
    const double variance = rep.at("variance").get<double>();
    v.require(rep.at("histogram").at(0) == 0 && rep.at("total") == 1023, "1023 nonzero residues enumerated");
    v.require(mean == "5120/1023", "mean " + mean);
    v.require(std::abs(variance - 2.5024) <= 1e-3, "variance " + num(variance, 7) + " vs 2.5024 +- 1e-3");
    v.require(secs < 1.0, "runtime " + num(secs, 3) + " s < 1 s");
    return v;
}

// 2. binomial weight law for every built-in generator with m <= 16
Verdict binomial_law() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < kBuiltinModuli.size(); ++i) {
        const Generator g = Generator::checked(kBuiltinModuli[i]);
        const unsigned m = g.degree();
        if (m > 16) continue;
        const WeightHistogram h = hw_distribution_exact(g);
        bool ok = h.counts.size() == m + 1 && h.counts[0] == 0;
        for (unsigned w = 1; ok && w <= m; ++w) ok = h.counts[w] == choose(m, w);
        v.require(ok, format_generator(g) + " histogram = C(" + std::to_string(m) + ", w)");
    }
    const double secs = seconds_since(t0);
    v.require(secs < 10.0, "runtime " + num(secs, 3) + " s < 10 s");
    return v;
}

// 3. sampled tail under the Hoeffding bound
Verdict concentration() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const QodReport r = concentration_check(builtin_generator(16), 32, 0.25, 100000, 1);
    const double secs = seconds_since(t0);
    v.require(r.samples == 100000, "samples " + std::to_string(r.samples));
    v.require(r.empirical_tail <= r.hoeffding_bound + r.slack,
              "tail " + num(r.empirical_tail) + " <= " + num(r.hoeffding_bound) + " + " + num(r.slack));
    v.require(secs < 5.0, "runtime " + num(secs, 3) + " s < 5 s");
    return v;
}

// 4. avalanche orbit over a full period at m = 10
Verdict avalanche() {
    Verdict v;
    const Generator g = builtin_generator(10);
    const auto orbit = avalanche_orbit(g, 1023);
    std::set<std::uint64_t> distinct;
    bool nonzero = true;
    std::vector<std::uint64_t> counts(11, 0);
    for (const auto& r : orbit) {
        nonzero = nonzero && !r.is_zero();
        distinct.insert(r.bits);
        ++counts[r.weight()];
    }
    v.require(orbit.size() == 1023 && distinct.size() == 1023, std::to_string(distinct.size()) + " distinct images");
    v.require(nonzero, "all nonzero");
    v.require(counts == hw_distribution_exact(g).counts, "orbit histogram = exhaustive histogram");
    return v;
}

// 5. sparse projection baseline against deterministic diffusion
Verdict rsp_baseline() {
    Verdict v;
    const std::uint64_t trials = 10000;
    for (unsigned m : {10u, 16u}) {
        const std::size_t length = (std::size_t{1} << m) - 1;
        for (std::size_t k : {1u, 5u}) {
            for (std::size_t d : {std::size_t{1}, length / 5, length}) {
                const RspMonteCarlo mc = rsp_monte_carlo(m, length, k, d, trials, 1000 * m + 10 * k + d);
                const double expected = rsp_expected_distance(m, length, k, d);
                const double sigma = std::sqrt(mc.variance / static_cast<double>(trials));
                const double exact = rsp_exact_expected_distance(m, length, k, d);
                v.require(std::abs(mc.mean - expected) <= 3 * sigma,
                          "m=" + std::to_string(m) + " k=" + std::to_string(k) + " d=" + std::to_string(d) + " mc " +
                              num(mc.mean, 5) + " vs closed form " + num(expected, 5) + " (hypergeometric " + num(exact, 5) +
                              ", sigma " + num(sigma, 3) + ")");
            }
        }
    }
    const Generator g = builtin_generator(10);
    for (std::size_t k : {1u, 5u}) {
        const WorstCaseComparison wc = compare_worst_case(g, k, 1023, trials, 7 + k);
        v.require(wc.rsp_max <= k, "k=" + std::to_string(k) + " max single-flip distance " + std::to_string(wc.rsp_max) +
                                       " (" + std::to_string(wc.rsp_rows_above_k) + " columns above k)");
        v.require(wc.psi_min >= 1, "diffusion min weight " + std::to_string(wc.psi_min));
        v.require(std::abs(wc.psi_mean - 5.005) <= 3 / std::sqrt(1023.0), "diffusion mean " + num(wc.psi_mean));
    }
    return v;
}

// 6. rescue mode against an exact-match dictionary
Verdict rescue_equivalence() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const unsigned n_blocks = 16;
    const std::size_t length = 64 * n_blocks;
    BlockMemory mem(MemoryConfig::gated(n_blocks, 16, length, CollisionPolicy::Rescue, 2024));
    std::unordered_map<std::string, std::uint64_t> reference;
    std::vector<BitPolynomial> keys;
    CounterRng rng(2024, 6);
    const std::uint64_t n = 100000;
    keys.reserve(n);
    std::uint64_t collided = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        keys.push_back(random_polynomial(length, rng));
        if (!reference.emplace(keys.back().bits().to_bytes(), i).second) continue;
        collided += !mem.write(keys.back(), {i}).collided_blocks.empty();
    }
    std::uint64_t mismatches = 0, below_one = 0, reads = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const BitPolynomial& k = keys[rng.below(n)];
        const VoteResult r = mem.read(k);
        ++reads;
        if (!r.found() || r.winner->value != reference.at(k.bits().to_bytes())) ++mismatches;
        if (r.found() && r.cr1 != 1.0) ++below_one;
    }
    const double secs = seconds_since(t0);
    v.require(collided > 0, std::to_string(collided) + " colliding writes exercised the rescue table");
    v.require(mismatches == 0, std::to_string(mismatches) + " of " + std::to_string(reads) + " reads differ from reference");
    v.require(below_one == 0, std::to_string(below_one) + " reads with cr1 < 1");
    v.require(secs < 30.0, "runtime " + num(secs, 3) + " s < 30 s");
    return v;
}

// 7. multiplicative decay of path confidence
Verdict decay() {
    Verdict v;
    // constant p through the memory: 1 of 10 blocks poisoned on every hop
    const fs::path dir = scratch("c7");
    std::ostringstream log, err;
    const int code = cli::run({"bench", "--p", "0.9", "--depths", "1..6", "--rr", "dontcare", "--out", dir.string()}, log, err);
    std::ifstream in(dir / "ranking.json");
    const json rep = json::parse(in);
    const double slope = rep.at("fit").at("slope").get<double>();
    v.require(code == 0, "bench exit " + std::to_string(code));
    v.require(std::abs(slope - std::log(0.9)) <= 1e-9, "memory chain slope " + num(slope, 15) + " vs ln 0.9");
    const json fit = rep.at("fit");
    v.require(fit.at("ssr_multiplicative").get<double>() < fit.at("ssr_additive").get<double>() &&
                  fit.at("ssr_multiplicative").get<double>() < fit.at("ssr_power").get<double>(),
              "constant p: multiplicative SSR lowest");

    // exact geometric points
    std::vector<DecayPoint> exact;
    for (std::size_t n = 1; n <= 6; ++n) exact.push_back({n, std::pow(0.9, static_cast<double>(n)), 1});
    const DecayFit ef = decay_fit(exact);
    v.require(std::abs(ef.slope - std::log(0.9)) <= 1e-9, "exact geometric slope " + num(ef.slope, 15));

    // heterogeneous p_i ~ U[0.80, 0.98]
    const double a = 0.80, b = 0.98;
    CounterRng prng(77, 0x9);
    std::vector<double> p;
    for (int i = 0; i < 6; ++i) p.push_back(a + (b - a) * prng.uniform01());
    const std::uint64_t trials = 1000000;
    const auto pts = simulate_chain_success(p, trials, 77);
    const DecayFit hf = decay_fit(pts);

    auto prim1 = [](double x) { return x * std::log(x) - x; };
    auto prim2 = [](double x) { return x * std::log(x) * std::log(x) - 2 * x * std::log(x) + 2 * x; };
    const double mean_lnp = (prim1(b) - prim1(a)) / (b - a);
    const double var_lnp = (prim2(b) - prim2(a)) / (b - a) - mean_lnp * mean_lnp;
    // slope = sum_i c_i ln p_i with c_i = sum_{n >= i} w_n, w_n the least-squares weights
    double nbar = 3.5, sxx = 0;
    for (int n = 1; n <= 6; ++n) sxx += (n - nbar) * (n - nbar);
    double sum_c2 = 0, noise = 0, F = 1;
    for (int i = 1; i <= 6; ++i) {
        double c = 0;
        for (int n = i; n <= 6; ++n) c += (n - nbar) / sxx;
        sum_c2 += c * c;
        F *= p[i - 1];
        noise += std::abs((i - nbar) / sxx) * std::sqrt((1 - F) / (F * static_cast<double>(trials)));
    }
    const double sigma = std::sqrt(var_lnp * sum_c2) + noise;
    v.require(std::abs(hf.slope - mean_lnp) <= 3 * sigma,
              "heterogeneous slope " + num(hf.slope) + " vs E[ln p] " + num(mean_lnp) + " +- " + num(3 * sigma, 3));
    v.require(hf.multiplicative_best(), "heterogeneous p: multiplicative SSR " + num(hf.ssr_multiplicative, 3) + " < additive " +
                                            num(hf.ssr_additive, 3) + ", power " + num(hf.ssr_power, 3));
    return v;
}

// 8. beam search against exhaustive enumeration
Verdict beam_soundness() {
    Verdict v;
    const unsigned n_blocks = 10;
    const std::size_t dim = 128 * n_blocks;
    for (CollisionPolicy rr : {CollisionPolicy::DontCare, CollisionPolicy::Rescue}) {
        BlockMemory mem(MemoryConfig::gated(n_blocks, 16, dim, rr, 8));
        const KeySpace keys(dim, 8);
        const SyntheticDag dag = generate_dag({2, 3, 0, 0.5, 8}, n_blocks);
        load_edges(mem, keys, dag.edges);
        inject_collisions(mem, keys, dag.edges, dag.injections, 8);

        // enumerate all 8 root-to-leaf paths from the edge list and score each
        // hop with a direct read
        struct Scored {
            std::vector<std::uint64_t> nodes;
            double cr2;
        };
        std::vector<Scored> all;
        std::function<void(std::vector<std::uint64_t>, double)> walk = [&](std::vector<std::uint64_t> path, double c) {
            if (path.size() == 4) {
                all.push_back({path, c});
                return;
            }
            for (const auto& e : dag.edges)
                if (e.subject == path.back()) {
                    auto next = path;
                    next.push_back(e.object);
                    walk(next, c * mem.read(keys.key(e.subject, e.relation)).cr1);
                }
        };
        walk({dag.root}, 1.0);
        std::sort(all.begin(), all.end(), [](const Scored& x, const Scored& y) {
            return x.cr2 != y.cr2 ? x.cr2 > y.cr2 : x.nodes < y.nodes;
        });

        for (std::size_t fs : {8u, 16u}) {
            const Traversal t = traverse(mem, keys, dag.root, {0, 1}, 3, fs);
            bool same = t.complete.size() == all.size();
            for (std::size_t i = 0; same && i < all.size(); ++i)
                same = t.complete[i].nodes() == all[i].nodes && t.complete[i].cr2 == all[i].cr2;
            v.require(same && all.size() == 8, std::string(to_string(rr)) + " fs=" + std::to_string(fs) + ": ranking of " +
                                                   std::to_string(t.complete.size()) + " paths matches enumeration");
            if (rr == CollisionPolicy::Rescue) {
                const double beff = effective_branching(t.complete);
                v.require(beff == 1.0, "rescue effective branching " + num(beff));
            }
        }
    }
    return v;
}

// 9. binding round trip and the sentence swap test
Verdict binding() {
    Verdict v;
    const std::size_t d = 1024;
    CounterRng rng(9);
    std::size_t failures = 0;
    for (int i = 0; i < 10000; ++i) {
        const Hypervector role = random_hypervector(d, rng), filler = random_hypervector(d, rng);
        failures += unbind(bind(role, filler), role) != filler;
    }
    v.require(failures == 0, std::to_string(10000 - failures) + "/10000 exact round trips");

    int above = 0, recovered = 0;
    double sum = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const SentenceDemo s = sentence_demo(d, mix64(t + 1));
        above += s.repr_fraction > 0.25;
        recovered += s.passed();
        sum += s.repr_fraction;
    }
    v.require(above == 100, std::to_string(above) + "/100 trials with Repr distance > 0.25 (mean " + num(sum / 100, 4) + ")");
    v.require(recovered == 100, std::to_string(recovered) + "/100 trials recover every filler");
    return v;
}

// 10. counterfactual estimator on the three-variable chain
Verdict counterfactual() {
    Verdict v;
    CounterfactualQuery q;
    q.evidence = {{"X", "x1"}, {"Y", "y1"}};
    q.intervention = {"X", "x0"};
    q.mechanisms = {{"U", "X", {{"u0", "x0"}, {"u1", "x1"}}}, {"X", "Y", {{"x0", "y0"}, {"x1", "y1"}}}};
    q.config.seed = 7;

    q.config.rr_mode = CollisionPolicy::Rescue;
    const CounterfactualResult r = run_counterfactual(q);
    v.require(r.ratio == 1.0, "rescue ratio " + num(r.ratio, 17) + " (u_hat " + r.u_hat + ", y_hat " + r.y_hat + ")");
    v.require(r.factual_snapshot_before == r.factual_snapshot_after, "rescue: factual snapshot unchanged");

    q.config.rr_mode = CollisionPolicy::DontCare;
    q.inject = {{1, 3}};
    const CounterfactualResult d = run_counterfactual(q);
    double num_q = 1, den_q = 1;
    unsigned abstentions = 0;
    for (const auto& h : d.counterfactual.hops) {
        num_q *= static_cast<double>(h.result.votes_for_winner) / h.result.n_blocks;
        abstentions += h.result.abstentions;
    }
    for (const auto& h : d.factual.hops) den_q *= static_cast<double>(h.result.votes_for_winner) / h.result.n_blocks;
    v.require(abstentions == 1, std::to_string(abstentions) + " abstention on the counterfactual chain");
    v.require(d.ratio == num_q / den_q, "ratio " + num(d.ratio, 17) + " == recomputed " + num(num_q / den_q, 17));
    v.require(d.factual_snapshot_before == d.factual_snapshot_after, "dontcare: factual snapshot unchanged");
    return v;
}

const std::vector<std::pair<std::string, std::function<Verdict()>>> kCriteria = {
    {"exact moments m=10", exact_moments},
    {"binomial weight law", binomial_law},
    {"Hoeffding concentration", concentration},
    {"avalanche orbit", avalanche},
    {"sparse projection baseline", rsp_baseline},
    {"rescue oracle equivalence", rescue_equivalence},
    {"cr2 multiplicative decay", decay},
    {"beam soundness", beam_soundness},
    {"binding algebra", binding},
    {"counterfactual estimator", counterfactual},
};

} // namespace

int main(int argc, char** argv) {
    std::size_t lo = 1, hi = kCriteria.size();
    if (argc > 1) {
        lo = hi = std::stoul(argv[1]);
        if (lo < 1 || lo > kCriteria.size()) {
            std::cerr << "criterion must be 1.." << kCriteria.size() << "\n";
            return 2;
        }
    }
    int failed = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
        Verdict v;
        try {
            v = kCriteria[i - 1].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        std::cout << "criterion " << i << " " << (v.pass ? "PASS" : "FAIL") << "  " << kCriteria[i - 1].first << ": " << v.detail
                  << "\n";
        failed += !v.pass;
    }
    return failed ? 1 : 0;
}
