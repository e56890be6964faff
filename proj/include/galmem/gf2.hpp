#pragma once

// Arithmetic in GF(2)[x] and the residue field GF(2)[x]/G(x).
//
// Bit order everywhere: bit j of a word is the coefficient of x^j.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "galmem/bits.hpp"
#include "galmem/error.hpp"

namespace galmem {

/// Element of GF(2)[x] with degree < length(); the length is part of the value.
class BitPolynomial {
public:
    BitPolynomial() = default;
    explicit BitPolynomial(std::size_t length) : bits_(length) {}
    explicit BitPolynomial(BitVector bits) : bits_(std::move(bits)) {}
    BitPolynomial(std::size_t length, std::span<const std::uint64_t> words) : bits_(length, words) {}

    /// x^j in a polynomial of the given length.
    static BitPolynomial monomial(std::size_t length, std::size_t j) {
        BitPolynomial p(length);
        p.bits_.set(j);
        return p;
    }

    std::size_t length() const noexcept { return bits_.length(); }
    bool coeff(std::size_t j) const { return bits_.bit(j); }
    void set_coeff(std::size_t j, bool v = true) { bits_.set(j, v); }
    void flip(std::size_t j) { bits_.flip(j); }
    std::size_t weight() const noexcept { return bits_.weight(); }
    bool is_zero() const noexcept { return bits_.is_zero(); }
    long degree() const noexcept { return bits_.highest_set_bit(); }

    const BitVector& bits() const noexcept { return bits_; }
    BitVector& bits() noexcept { return bits_; }

    BitPolynomial& operator^=(const BitPolynomial& o) {
        bits_ ^= o.bits_;
        return *this;
    }
    friend BitPolynomial operator^(BitPolynomial a, const BitPolynomial& b) {
        a ^= b;
        return a;
    }
    friend bool operator==(const BitPolynomial&, const BitPolynomial&) = default;

private:
    BitVector bits_;
};

/// m-bit element of GF(2^m) in the polynomial basis {1, x, ..., x^(m-1)}.
struct Residue {
    std::uint64_t bits = 0;

    unsigned weight() const noexcept { return static_cast<unsigned>(std::popcount(bits)); }
    bool is_zero() const noexcept { return bits == 0; }

    friend constexpr Residue operator^(Residue a, Residue b) noexcept { return {a.bits ^ b.bits}; }
    friend constexpr bool operator==(Residue, Residue) = default;
    friend constexpr auto operator<=>(Residue, Residue) = default;
};

inline constexpr unsigned kMaxDegree = 32;
inline constexpr unsigned kMaxEnumerableDegree = 24;

namespace detail {

constexpr unsigned modulus_degree(std::uint64_t modulus) noexcept {
    return modulus == 0 ? 0 : 63u - static_cast<unsigned>(std::countl_zero(modulus));
}

constexpr std::uint64_t mul_by_x(std::uint64_t r, std::uint64_t modulus, unsigned m) noexcept {
    r <<= 1;
    if ((r >> m) & 1u) r ^= modulus;
    return r;
}

/// Multiplicative order of x equals 2^m - 1. Requires bit 0 set (x is a unit).
constexpr bool order_of_x_is_maximal(std::uint64_t modulus) noexcept {
    const unsigned m = modulus_degree(modulus);
    const std::uint64_t group_order = (std::uint64_t{1} << m) - 1;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i < group_order; ++i) {
        r = mul_by_x(r, modulus, m);
        if (r == 1) return false;
    }
    return mul_by_x(r, modulus, m) == 1;
}

} // namespace detail

/// Degree-m modulus G(x) with bit m and bit 0 set, plus a primitivity flag.
///
/// The flag is only ever set by exhaustive order enumeration (checked()) or
/// an explicit caller attestation (attested()); diffusion refuses generators
/// without it.
class Generator {
public:
    using ReduceTable = std::array<std::uint64_t, 256>;

    explicit Generator(std::uint64_t modulus) : Generator(modulus, false) {}

    /// Runs is_primitive; the result carries the outcome in primitive_verified().
    static Generator checked(std::uint64_t modulus);

    /// Marks the modulus primitive without enumeration (for m > 24).
    static Generator attested(std::uint64_t modulus) { return Generator(modulus, true); }

    std::uint64_t modulus() const noexcept { return modulus_; }
    unsigned degree() const noexcept { return degree_; }
    bool primitive_verified() const noexcept { return primitive_; }
    std::uint64_t mask() const noexcept { return (std::uint64_t{1} << degree_) - 1; }

    /// x^m mod G, i.e. the modulus without its leading term.
    Residue x_to_m() const noexcept { return {modulus_ & mask()}; }

    /// (t * x^m) mod G for every byte t; drives byte-at-a-time reduction.
    const ReduceTable& reduce_table() const noexcept { return *table_; }

    friend bool operator==(const Generator& a, const Generator& b) noexcept {
        return a.modulus_ == b.modulus_ && a.primitive_ == b.primitive_;
    }

private:
    Generator(std::uint64_t modulus, bool primitive) : modulus_(modulus), degree_(detail::modulus_degree(modulus)), primitive_(primitive) {
        if (degree_ < 2 || degree_ > kMaxDegree)
            throw Error(ErrorCode::ConfigInvalid, "generator degree must be in [2, " + std::to_string(kMaxDegree) + "]");
        if ((modulus & 1u) == 0) throw Error(ErrorCode::ConfigInvalid, "generator needs a nonzero constant term");
        auto table = std::make_shared<ReduceTable>();
        for (std::uint64_t t = 0; t < 256; ++t) {
            std::uint64_t r = 0;
            for (int bit = 7; bit >= 0; --bit) {
                r = detail::mul_by_x(r, modulus_, degree_);
                if ((t >> bit) & 1u) r ^= x_to_m().bits;
            }
            (*table)[t] = r;
        }
        table_ = std::move(table);
    }

    std::uint64_t modulus_;
    unsigned degree_;
    bool primitive_;
    std::shared_ptr<const ReduceTable> table_;
};

/// true iff x has multiplicative order 2^m - 1 modulo G.
inline bool is_primitive(const Generator& g) {
    if (g.degree() > kMaxEnumerableDegree)
        throw Error(ErrorCode::DegreeTooLarge,
                    "exhaustive order check limited to m <= " + std::to_string(kMaxEnumerableDegree));
    return detail::order_of_x_is_maximal(g.modulus());
}

inline Generator Generator::checked(std::uint64_t modulus) {
    Generator g(modulus);
    return Generator(modulus, is_primitive(g));
}

/// Residue of the polynomial whose packed coefficient words are `words`.
/// Consumes the input a byte at a time from the top.
inline Residue reduce_words(std::span<const std::uint64_t> words, const Generator& g) noexcept {
    const unsigned m = g.degree();
    const auto& table = g.reduce_table();
    const std::uint64_t mask = g.mask();
    std::uint64_t r = 0;
    for (std::size_t wi = words.size(); wi-- > 0;) {
        const std::uint64_t w = words[wi];
        if (w == 0 && r == 0) continue;
        for (int byte = 7; byte >= 0; --byte) {
            r = (r << 8) | ((w >> (8 * byte)) & 0xFF);
            r = (r & mask) ^ table[r >> m];
        }
    }
    return {r};
}

/// P(x) mod G(x).
inline Residue reduce(const BitPolynomial& p, const Generator& g) { return reduce_words(p.bits().words(), g); }

/// a * b in GF(2^m).
inline Residue gf2_mul(Residue a, Residue b, const Generator& g) noexcept {
    const unsigned m = g.degree();
    std::uint64_t acc = 0;
    for (int i = static_cast<int>(m) - 1; i >= 0; --i) {
        acc = detail::mul_by_x(acc, g.modulus(), m);
        if ((b.bits >> i) & 1u) acc ^= a.bits;
    }
    return {acc};
}

inline Residue mul_by_x(Residue a, const Generator& g) noexcept {
    return {detail::mul_by_x(a.bits, g.modulus(), g.degree())};
}

/// x^m * (r xor seed) for an already-reduced r.
inline Residue diffuse_residue(Residue r, const Generator& g, Residue seed = {}) {
    if (!g.primitive_verified())
        throw Error(ErrorCode::UnverifiedGenerator, "diffusion needs a generator with verified primitivity");
    if (seed.bits & ~g.mask()) throw Error(ErrorCode::LengthMismatch, "seed wider than the generator degree");
    return gf2_mul(r ^ seed, g.x_to_m(), g);
}

/// x^m * (P mod G xor seed). With seed = 0 this is the plain diffusion map.
inline Residue diffuse(const BitPolynomial& p, const Generator& g, Residue seed = {}) {
    return diffuse_residue(reduce(p, g), g, seed);
}

/// Size of the collision kernel {P : deg P < L, P mod G = 0}: 2^max(L-m, 0).
inline std::uint64_t kernel_size(std::size_t length, unsigned m) {
    const std::size_t free_bits = length > m ? length - m : 0;
    if (free_bits >= 64) throw std::overflow_error("kernel size 2^" + std::to_string(free_bits) + " exceeds 64 bits");
    return std::uint64_t{1} << free_bits;
}

// Primitive moduli shipped with the library, one per supported address width.
inline constexpr std::array<std::uint64_t, 6> kBuiltinModuli = {
    0x13,       // x^4 + x + 1
    0x11D,      // x^8 + x^4 + x^3 + x^2 + 1
    0x409,      // x^10 + x^3 + 1
    0x1100B,    // x^16 + x^12 + x^3 + x + 1
    0x100009,   // x^20 + x^3 + 1
    0x1000087,  // x^24 + x^7 + x^2 + x + 1
};

static_assert(detail::order_of_x_is_maximal(kBuiltinModuli[0]));
static_assert(detail::order_of_x_is_maximal(kBuiltinModuli[1]));
static_assert(detail::order_of_x_is_maximal(kBuiltinModuli[2]));
static_assert(detail::order_of_x_is_maximal(kBuiltinModuli[3]));

inline std::optional<std::uint64_t> builtin_modulus(unsigned m) noexcept {
    for (auto mod : kBuiltinModuli)
        if (detail::modulus_degree(mod) == m) return mod;
    return std::nullopt;
}

/// Verified built-in generator for degree m; ConfigInvalid if none is shipped.
inline Generator builtin_generator(unsigned m) {
    auto mod = builtin_modulus(m);
    if (!mod) throw Error(ErrorCode::ConfigInvalid, "no built-in generator of degree " + std::to_string(m));
    Generator g = Generator::checked(*mod);
    if (!g.primitive_verified()) throw Error(ErrorCode::UnverifiedGenerator, "built-in table entry failed primitivity");
    return g;
}

/// The first `count` primitive moduli of degree m in increasing numeric order.
inline std::vector<Generator> primitive_generators(unsigned m, std::size_t count) {
    if (m > kMaxEnumerableDegree)
        throw Error(ErrorCode::DegreeTooLarge, "primitive search limited to m <= " + std::to_string(kMaxEnumerableDegree));
    std::vector<Generator> out;
    const std::uint64_t top = std::uint64_t{1} << m;
    for (std::uint64_t low = 1; low < top && out.size() < count; low += 2) {
        // Primitive polynomials have an odd number of terms.
        if (std::popcount(top | low) % 2 == 0) continue;
        if (detail::order_of_x_is_maximal(top | low)) out.push_back(Generator::attested(top | low));
    }
    if (out.size() < count)
        throw Error(ErrorCode::ConfigInvalid, "only " + std::to_string(out.size()) + " primitive moduli of degree " + std::to_string(m));
    return out;
}

// ---- text forms ------------------------------------------------------------

namespace detail {

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, 16);
    return std::string(buf, end);
}

inline int hex_digit(char c) noexcept {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace detail

/// "g:<hex>", most significant nibble first, e.g. x^10+x^3+1 -> "g:409".
inline std::string format_generator(const Generator& g) { return "g:" + detail::to_hex(g.modulus()); }

/// Parses "g:<hex>"; the primitivity flag is checked when m <= 24.
inline Generator parse_generator(std::string_view text) {
    if (text.substr(0, 2) != "g:" || text.size() == 2)
        throw Error(ErrorCode::ParseError, "generator must look like g:<hex>, got '" + std::string(text) + "'");
    std::uint64_t v = 0;
    const char* first = text.data() + 2;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v, 16);
    if (ec != std::errc{} || ptr != last) throw Error(ErrorCode::ParseError, "bad hex in '" + std::string(text) + "'");
    Generator g(v);
    return g.degree() <= kMaxEnumerableDegree ? Generator::checked(v) : g;
}

/// "p:<hex>;L=<len>" with ceil(L/4) nibbles, most significant first.
inline std::string format_polynomial(const BitPolynomial& p) {
    const std::size_t nibbles = (p.length() + 3) / 4;
    std::string hex(std::max<std::size_t>(nibbles, 1), '0');
    const auto words = p.bits().words();
    for (std::size_t i = 0; i < nibbles; ++i) {
        const unsigned nib = static_cast<unsigned>((words[(4 * i) / 64] >> ((4 * i) % 64)) & 0xF);
        hex[nibbles - 1 - i] = "0123456789abcdef"[nib];
    }
    return "p:" + hex + ";L=" + std::to_string(p.length());
}

inline BitPolynomial parse_polynomial(std::string_view text) {
    const auto semi = text.find(";L=");
    if (text.substr(0, 2) != "p:" || semi == std::string_view::npos || semi == 2)
        throw Error(ErrorCode::ParseError, "polynomial must look like p:<hex>;L=<len>");
    std::size_t length = 0;
    const auto len_text = text.substr(semi + 3);
    auto [lp, lec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), length);
    if (lec != std::errc{} || lp != len_text.data() + len_text.size() || length == 0)
        throw Error(ErrorCode::ParseError, "bad length in '" + std::string(text) + "'");
    const auto hex = text.substr(2, semi - 2);
    BitPolynomial p(length);
    for (std::size_t i = 0; i < hex.size(); ++i) {
        const int nib = detail::hex_digit(hex[hex.size() - 1 - i]);
        if (nib < 0) throw Error(ErrorCode::ParseError, "bad hex digit in '" + std::string(text) + "'");
        for (int b = 0; b < 4; ++b) {
            if (!((nib >> b) & 1)) continue;
            const std::size_t j = 4 * i + static_cast<std::size_t>(b);
            if (j >= length) throw Error(ErrorCode::LengthMismatch, "coefficient x^" + std::to_string(j) + " beyond L");
            p.set_coeff(j);
        }
    }
    return p;
}

} // namespace galmem
