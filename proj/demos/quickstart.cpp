// Store a few relations, follow them back, and show what a forced collision
// does to path confidence.
#include <iostream>

#include "galmem/galmem.hpp"

using namespace galmem;

int main() {
    const unsigned n_blocks = 8;
    const std::size_t dim = 128 * n_blocks;

    // Tiny family graph: relation 0 = parent, 1 = employer.
    const std::vector<RelationRecord> edges = {{1, 0, 2}, {2, 0, 3}, {3, 1, 40}, {2, 1, 41}};

    for (CollisionPolicy rr : {CollisionPolicy::Rescue, CollisionPolicy::DontCare}) {
        BlockMemory mem(MemoryConfig::gated(n_blocks, 16, dim, rr, 42));
        const KeySpace keys(dim, 42);
        load_edges(mem, keys, edges);
        inject_collisions(mem, keys, edges, {{1, 5}}, 42);  // poison block 5 for 2 -parent->

        const Traversal t = traverse(mem, keys, 1, {{0}, {0}, {1}}, 4);
        const PathTrace& best = t.complete.front();
        std::cout << to_string(rr) << ": ";
        for (auto n : best.nodes()) std::cout << n << " ";
        std::cout << " cr2 = " << best.cr2 << "\n";
        for (const auto& h : best.hops)
            std::cout << "  hop from " << h.node << " votes " << h.result.votes_for_winner << "/" << h.result.n_blocks
                      << (h.result.rescued ? " (rescued)" : "") << "\n";
    }

    const SentenceDemo s = sentence_demo(1024, 1);
    std::cout << "dog-bit-man vs man-bit-dog: Hamming fraction " << s.repr_fraction << ", subject of the second is "
              << s.second[0].name << "\n";
}
