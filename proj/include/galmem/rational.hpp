#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace galmem {

/// Reduced non-negative fraction. Intermediates go through 128 bits; the
/// reduced result must fit in 64.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    static Rational make(unsigned __int128 n, unsigned __int128 d) {
        if (d == 0) throw std::domain_error("zero denominator");
        unsigned __int128 a = n, b = d;
        while (b != 0) {
            const auto t = a % b;
            a = b;
            b = t;
        }
        const auto g = n == 0 ? d : a;
        n /= g;
        d /= g;
        if (n > UINT64_MAX || d > UINT64_MAX) throw std::overflow_error("rational does not fit in 64 bits");
        return {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d)};
    }

    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    friend bool operator==(const Rational&, const Rational&) = default;
};

} // namespace galmem
