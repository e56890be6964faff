#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "galmem/error.hpp"

namespace galmem {

/// Fixed-length bit sequence packed little-endian into 64-bit words:
/// bit j lives in word j/64 at position j%64. Bits past length() are
/// always zero, so word-wise equality and popcount are exact.
class BitVector {
public:
    BitVector() = default;

    explicit BitVector(std::size_t length)
        : length_(length), words_(word_count(length), 0) {}

    BitVector(std::size_t length, std::span<const std::uint64_t> words)
        : length_(length), words_(word_count(length), 0) {
        if (words.size() > words_.size())
            throw Error(ErrorCode::LengthMismatch, "more words than fit in " + std::to_string(length) + " bits");
        std::copy(words.begin(), words.end(), words_.begin());
        if (tail_mask() != ~std::uint64_t{0} && !words_.empty() && (words_.back() & ~tail_mask()) != 0)
            throw Error(ErrorCode::LengthMismatch, "set bit beyond length " + std::to_string(length));
    }

    static constexpr std::size_t word_count(std::size_t bits) noexcept { return (bits + 63) / 64; }

    std::size_t length() const noexcept { return length_; }
    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::span<std::uint64_t> words() noexcept { return words_; }

    bool bit(std::size_t j) const {
        check(j);
        return (words_[j >> 6] >> (j & 63)) & 1u;
    }

    void set(std::size_t j, bool value = true) {
        check(j);
        const std::uint64_t mask = std::uint64_t{1} << (j & 63);
        if (value)
            words_[j >> 6] |= mask;
        else
            words_[j >> 6] &= ~mask;
    }

    void flip(std::size_t j) {
        check(j);
        words_[j >> 6] ^= std::uint64_t{1} << (j & 63);
    }

    std::size_t weight() const noexcept {
        std::size_t w = 0;
        for (auto word : words_) w += static_cast<std::size_t>(std::popcount(word));
        return w;
    }

    bool is_zero() const noexcept {
        return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
    }

    /// Index of the highest set bit, or -1 for the zero vector.
    long highest_set_bit() const noexcept {
        for (std::size_t i = words_.size(); i-- > 0;) {
            if (words_[i] != 0)
                return static_cast<long>(i * 64 + 63 - static_cast<std::size_t>(std::countl_zero(words_[i])));
        }
        return -1;
    }

    BitVector& operator^=(const BitVector& other) {
        require_same_length(other);
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= other.words_[i];
        return *this;
    }

    friend BitVector operator^(BitVector lhs, const BitVector& rhs) {
        lhs ^= rhs;
        return lhs;
    }

    friend bool operator==(const BitVector&, const BitVector&) = default;

    /// Circular rotation toward higher indices: bit j moves to (j + shift) mod length.
    BitVector rotated_left(std::size_t shift) const {
        BitVector out(length_);
        if (length_ == 0) return out;
        shift %= length_;
        if (shift == 0) return *this;
        if (length_ % 64 == 0) {
            const std::size_t word_shift = shift / 64;
            const unsigned bit_shift = static_cast<unsigned>(shift % 64);
            const std::size_t n = words_.size();
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint64_t lo = words_[(i + n - word_shift) % n];
                const std::uint64_t hi = words_[(i + n - word_shift - 1) % n];
                out.words_[i] = bit_shift == 0 ? lo : (lo << bit_shift) | (hi >> (64 - bit_shift));
            }
            return out;
        }
        for (std::size_t j = 0; j < length_; ++j)
            if (bit(j)) out.set((j + shift) % length_);
        return out;
    }

    std::size_t hamming_distance(const BitVector& other) const {
        require_same_length(other);
        std::size_t d = 0;
        for (std::size_t i = 0; i < words_.size(); ++i)
            d += static_cast<std::size_t>(std::popcount(words_[i] ^ other.words_[i]));
        return d;
    }

    /// Copy of bits [offset, offset + count) as a new vector of length count.
    BitVector slice(std::size_t offset, std::size_t count) const {
        if (offset + count > length_)
            throw Error(ErrorCode::LengthMismatch, "slice past end of bit vector");
        BitVector out(count);
        if (offset % 64 == 0) {
            std::copy_n(words_.begin() + static_cast<std::ptrdiff_t>(offset / 64), out.words_.size(), out.words_.begin());
            out.clear_tail();
            return out;
        }
        for (std::size_t j = 0; j < count; ++j)
            if (bit(offset + j)) out.set(j);
        return out;
    }

    /// Little-endian byte image of the packed words (ceil(length/8) bytes).
    std::string to_bytes() const {
        std::string out((length_ + 7) / 8, '\0');
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<char>((words_[i / 8] >> (8 * (i % 8))) & 0xFF);
        return out;
    }

private:
    std::uint64_t tail_mask() const noexcept {
        const std::size_t r = length_ % 64;
        return r == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << r) - 1;
    }

    void clear_tail() noexcept {
        if (!words_.empty()) words_.back() &= tail_mask();
    }

    void check(std::size_t j) const {
        if (j >= length_)
            throw Error(ErrorCode::LengthMismatch,
                        "bit index " + std::to_string(j) + " outside length " + std::to_string(length_));
    }

    void require_same_length(const BitVector& other) const {
        if (other.length_ != length_)
            throw Error(ErrorCode::LengthMismatch,
                        "lengths differ: " + std::to_string(length_) + " vs " + std::to_string(other.length_));
    }

    std::size_t length_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace galmem
