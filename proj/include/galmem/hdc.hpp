#pragma once

// Role-filler composition over fixed-width binary hypervectors:
// bind = rotate-then-XOR, bundle = bitwise majority, cleanup = nearest atom.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "galmem/bits.hpp"
#include "galmem/gf2.hpp"
#include "galmem/rng.hpp"

namespace galmem {

using Hypervector = BitVector;

namespace detail {
inline void require_same_dimension(const Hypervector& a, const Hypervector& b) {
    if (a.length() != b.length())
        throw Error(ErrorCode::DimensionMismatch,
                    "hypervector dimensions " + std::to_string(a.length()) + " and " + std::to_string(b.length()));
}
} // namespace detail

inline Hypervector bind(const Hypervector& role, const Hypervector& filler) {
    detail::require_same_dimension(role, filler);
    Hypervector out = role.rotated_left(1);
    out ^= filler;
    return out;
}

inline Hypervector unbind(const Hypervector& bound, const Hypervector& role) {
    detail::require_same_dimension(bound, role);
    Hypervector out = role.rotated_left(1);
    out ^= bound;
    return out;
}

/// Bitwise strict majority; an exact tie (possible for even counts) gives 0.
inline Hypervector bundle(std::span<const Hypervector> vs) {
    if (vs.empty()) throw Error(ErrorCode::EmptyBundle, "bundle of zero hypervectors");
    const std::size_t d = vs.front().length();
    for (const auto& v : vs) detail::require_same_dimension(vs.front(), v);
    if (vs.size() == 1) return vs.front();

    Hypervector out(d);
    auto out_words = out.words();
    std::vector<std::uint32_t> counts(64);
    for (std::size_t w = 0; w < out_words.size(); ++w) {
        std::fill(counts.begin(), counts.end(), 0u);
        for (const auto& v : vs) {
            std::uint64_t word = v.words()[w];
            while (word) {
                ++counts[static_cast<unsigned>(std::countr_zero(word))];
                word &= word - 1;
            }
        }
        std::uint64_t result = 0;
        for (unsigned b = 0; b < 64; ++b)
            if (2 * std::size_t{counts[b]} > vs.size()) result |= std::uint64_t{1} << b;
        out_words[w] = result;
    }
    return out;
}

inline Hypervector bundle(std::initializer_list<Hypervector> vs) {
    return bundle(std::span<const Hypervector>(vs.begin(), vs.size()));
}

inline Hypervector random_hypervector(std::size_t dimension, CounterRng& rng) {
    Hypervector v(dimension);
    auto words = v.words();
    for (auto& w : words) w = rng();
    if (dimension % 64) words.back() &= (std::uint64_t{1} << (dimension % 64)) - 1;
    return v;
}

/// Degree-24 generator shared by every codebook (verified once per process).
inline const Generator& codebook_generator() {
    static const Generator g = builtin_generator(24);
    return g;
}

/// Named atoms. Atom bits are consecutive 24-bit chunks, chunk i being the
/// diffusion of the name's UTF-8 bytes (plus a 0x01 terminator so trailing
/// NULs matter) under a seed derived from (book seed, name, i).
class Codebook {
public:
    Codebook(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
        if (dimension == 0) throw Error(ErrorCode::ConfigInvalid, "codebook dimension must be positive");
    }

    static Hypervector atom(std::string_view name, std::size_t dimension, std::uint64_t seed) {
        const Generator& g = codebook_generator();
        const unsigned m = g.degree();
        std::string bytes(name);
        bytes.push_back('\x01');
        BitPolynomial p(bytes.size() * 8);
        for (std::size_t i = 0; i < bytes.size(); ++i)
            for (unsigned b = 0; b < 8; ++b)
                if ((static_cast<unsigned char>(bytes[i]) >> b) & 1u) p.set_coeff(8 * i + b);
        const Residue base = reduce(p, g);

        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ull;

        Hypervector v(dimension);
        for (std::size_t chunk = 0, pos = 0; pos < dimension; ++chunk, pos += m) {
            const Residue s{mix64(seed ^ h ^ mix64(chunk + 1)) & g.mask()};
            const std::uint64_t r = diffuse_residue(base, g, s).bits;
            for (unsigned b = 0; b < m && pos + b < dimension; ++b)
                if ((r >> b) & 1u) v.set(pos + b);
        }
        return v;
    }

    std::size_t dimension() const noexcept { return dimension_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }
    bool contains(std::string_view name) const { return atoms_.find(name) != atoms_.end(); }

    const Hypervector& add(std::string_view name) {
        auto it = atoms_.find(name);
        if (it == atoms_.end()) it = atoms_.emplace(std::string(name), atom(name, dimension_, seed_)).first;
        return it->second;
    }

    const Hypervector& at(std::string_view name) const {
        auto it = atoms_.find(name);
        if (it == atoms_.end()) throw Error(ErrorCode::NotFound, "no atom named '" + std::string(name) + "'");
        return it->second;
    }

    const std::map<std::string, Hypervector, std::less<>>& entries() const noexcept { return atoms_; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
    std::map<std::string, Hypervector, std::less<>> atoms_;
};

struct CleanupResult {
    std::string name;
    std::size_t distance = 0;
};

/// Nearest atom by Hamming distance; map order makes ties resolve to the
/// lexicographically smallest name.
inline CleanupResult cleanup(const Hypervector& v, const Codebook& book) {
    if (book.empty()) throw Error(ErrorCode::NotFound, "cleanup against an empty codebook");
    if (v.length() != book.dimension())
        throw Error(ErrorCode::DimensionMismatch,
                    "query dimension " + std::to_string(v.length()) + " vs codebook " + std::to_string(book.dimension()));
    CleanupResult best;
    bool first = true;
    for (const auto& [name, atom] : book.entries()) {
        const std::size_t d = v.hamming_distance(atom);
        if (first || d < best.distance) {
            best = {name, d};
            first = false;
        }
    }
    return best;
}

struct SentenceDemo {
    std::size_t dimension = 0;
    std::uint64_t seed = 0;
    std::size_t repr_distance = 0;
    double repr_fraction = 0;
    // cleanup of unbind(Repr, role) for Subj, Verb, Obj
    CleanupResult first[3];
    CleanupResult second[3];

    // Representations differ and every role query returns its own filler.
    bool passed() const {
        return repr_distance > 0 && first[0].name == "Dog" && first[1].name == "Bite" && first[2].name == "Man" &&
               second[0].name == "Man" && second[1].name == "Bite" && second[2].name == "Dog";
    }
};

/// "The dog bit the man" vs "the man bit the dog": same atoms, swapped roles.
inline SentenceDemo sentence_demo(std::size_t dimension = 1024, std::uint64_t seed = 0) {
    Codebook roles(dimension, seed);
    Codebook fillers(dimension, seed);
    const auto subj = roles.add("Subj"), verb = roles.add("Verb"), obj = roles.add("Obj");
    const auto dog = fillers.add("Dog"), bite = fillers.add("Bite"), man = fillers.add("Man");

    const Hypervector repr1 = bundle({bind(subj, dog), bind(verb, bite), bind(obj, man)});
    const Hypervector repr2 = bundle({bind(subj, man), bind(verb, bite), bind(obj, dog)});

    SentenceDemo out;
    out.dimension = dimension;
    out.seed = seed;
    out.repr_distance = repr1.hamming_distance(repr2);
    out.repr_fraction = static_cast<double>(out.repr_distance) / static_cast<double>(dimension);
    const Hypervector* role_list[3] = {&subj, &verb, &obj};
    for (int i = 0; i < 3; ++i) {
        out.first[i] = cleanup(unbind(repr1, *role_list[i]), fillers);
        out.second[i] = cleanup(unbind(repr2, *role_list[i]), fillers);
    }
    return out;
}

} // namespace galmem
