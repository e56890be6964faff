#pragma once

// N-block partitioned associative store. Each block diffuses its own
// contiguous segment of the input into an m-bit slot address; reads take a
// majority vote over the blocks' stored entry addresses.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "galmem/gf2.hpp"
#include "galmem/rng.hpp"

namespace galmem {

enum class CollisionPolicy : std::uint8_t { DontCare = 0, Rescue = 1 };
enum class Schedule : std::uint8_t { Unified = 0, Gated = 1 };

inline std::string_view to_string(CollisionPolicy p) { return p == CollisionPolicy::Rescue ? "rescue" : "dontcare"; }
inline std::string_view to_string(Schedule s) { return s == Schedule::Unified ? "unified" : "gated"; }

struct EntryAddress {
    std::uint64_t value = 0;
    friend constexpr auto operator<=>(EntryAddress, EntryAddress) = default;
};

struct MemoryConfig {
    unsigned n_blocks = 1;
    unsigned address_bits = 0;
    std::size_t input_length = 0;  // L; each block reads q = L / N bits
    std::vector<Generator> generators;
    std::vector<Residue> seeds;
    CollisionPolicy rr_mode = CollisionPolicy::DontCare;
    Schedule schedule = Schedule::Unified;
    bool rescue_always = false;  // consult the rescue table on every read, not only on disagreement
    std::uint64_t slot_budget = std::uint64_t{1} << 28;

    std::size_t segment_length() const noexcept { return n_blocks ? input_length / n_blocks : 0; }

    /// One generator and one seed shared by every block.
    static MemoryConfig unified(unsigned n_blocks, const Generator& g, Residue seed, std::size_t input_length,
                                CollisionPolicy rr) {
        MemoryConfig c;
        c.n_blocks = n_blocks;
        c.address_bits = g.degree();
        c.input_length = input_length;
        c.generators.assign(n_blocks, g);
        c.seeds.assign(n_blocks, seed);
        c.rr_mode = rr;
        c.schedule = Schedule::Unified;
        return c;
    }

    /// Distinct primitive generator per block and per-block seeds drawn from seed.
    static MemoryConfig gated(unsigned n_blocks, unsigned m, std::size_t input_length, CollisionPolicy rr,
                              std::uint64_t seed) {
        MemoryConfig c;
        c.n_blocks = n_blocks;
        c.address_bits = m;
        c.input_length = input_length;
        c.generators = primitive_generators(m, n_blocks);
        CounterRng rng(seed, 0x5eed);
        for (unsigned b = 0; b < n_blocks; ++b) c.seeds.push_back({rng() & ((std::uint64_t{1} << m) - 1)});
        c.rr_mode = rr;
        c.schedule = Schedule::Gated;
        return c;
    }

    void validate() const {
        if (n_blocks == 0) throw Error(ErrorCode::ConfigInvalid, "need at least one block");
        if (generators.size() != n_blocks || seeds.size() != n_blocks)
            throw Error(ErrorCode::ConfigInvalid, "need one generator and one seed per block");
        if (input_length == 0 || input_length % n_blocks != 0)
            throw Error(ErrorCode::LengthMismatch,
                        "input length " + std::to_string(input_length) + " not divisible into " + std::to_string(n_blocks) + " blocks");
        for (unsigned b = 0; b < n_blocks; ++b) {
            if (!generators[b].primitive_verified())
                throw Error(ErrorCode::UnverifiedGenerator, "block " + std::to_string(b) + " generator not verified primitive");
            if (generators[b].degree() != address_bits)
                throw Error(ErrorCode::ConfigInvalid, "block " + std::to_string(b) + " generator degree != address bits");
            if (seeds[b].bits & ~generators[b].mask())
                throw Error(ErrorCode::ConfigInvalid, "block " + std::to_string(b) + " seed wider than m bits");
        }
        if (schedule == Schedule::Unified) {
            for (unsigned b = 1; b < n_blocks; ++b)
                if (!(generators[b] == generators[0]) || seeds[b] != seeds[0])
                    throw Error(ErrorCode::ConfigInvalid, "unified schedule needs one generator and one seed");
        }
        if (address_bits > 30 || (std::uint64_t{n_blocks} << address_bits) > slot_budget)
            throw Error(ErrorCode::ConfigInvalid, "N * 2^m slots exceed the slot budget");
    }
};

struct WriteReport {
    std::vector<unsigned> collided_blocks;
};

/// Outcome of one read. votes_for_winner + abstentions + other_votes == N.
/// cr1 = votes_for_winner / N, except that a rescued read reports cr1 = 1.
/// An absent winner is the NotFound outcome (cr1 = 0).
struct VoteResult {
    std::optional<EntryAddress> winner;
    unsigned votes_for_winner = 0;
    unsigned abstentions = 0;
    unsigned other_votes = 0;
    unsigned n_blocks = 0;
    double cr1 = 0;
    bool rescued = false;

    bool found() const noexcept { return winner.has_value(); }
    friend bool operator==(const VoteResult&, const VoteResult&) = default;
};

inline EntryAddress require_winner(const VoteResult& v) {
    if (!v.winner) throw Error(ErrorCode::NotFound, "every block abstained and no rescue entry matched");
    return *v.winner;
}

class BlockMemory {
public:
    enum class SlotState : std::uint8_t { Empty = 0, Holds = 1, Poisoned = 2 };

    struct SlotCounts {
        std::uint64_t empty = 0, holds = 0, poisoned = 0;
    };

    explicit BlockMemory(MemoryConfig config) : config_(std::move(config)) {
        config_.validate();
        const std::size_t slots = std::size_t{1} << config_.address_bits;
        blocks_.resize(config_.n_blocks);
        for (auto& blk : blocks_) {
            blk.state.assign(slots, SlotState::Empty);
            blk.ea.assign(slots, 0);
        }
    }

    const MemoryConfig& config() const noexcept { return config_; }
    unsigned n_blocks() const noexcept { return config_.n_blocks; }
    std::size_t slots_per_block() const noexcept { return std::size_t{1} << config_.address_bits; }
    std::size_t total_slots() const noexcept { return slots_per_block() * config_.n_blocks; }

    /// Input zero-padded to L bits; longer inputs are rejected.
    BitPolynomial canonical_input(const BitPolynomial& p) const {
        if (p.length() > config_.input_length)
            throw Error(ErrorCode::LengthMismatch, "input of " + std::to_string(p.length()) + " bits exceeds L = " +
                                                       std::to_string(config_.input_length));
        if (p.length() == config_.input_length) return p;
        return BitPolynomial(config_.input_length, p.bits().words());
    }

    /// Slot address of block b for a canonical (length-L) input.
    Residue address(unsigned b, const BitPolynomial& canonical) const {
        const std::size_t q = config_.segment_length();
        Residue r;
        if (q % 64 == 0) {
            r = reduce_words(canonical.bits().words().subspan(b * q / 64, q / 64), config_.generators[b]);
        } else {
            r = reduce(BitPolynomial(canonical.bits().slice(b * q, q)), config_.generators[b]);
        }
        return diffuse_residue(r, config_.generators[b], config_.seeds[b]);
    }

    std::vector<Residue> addresses(const BitPolynomial& p) const {
        const BitPolynomial c = canonical_input(p);
        std::vector<Residue> out(config_.n_blocks);
        for (unsigned b = 0; b < config_.n_blocks; ++b) out[b] = address(b, c);
        return out;
    }

    WriteReport write(const BitPolynomial& p, EntryAddress ea) {
        const BitPolynomial c = canonical_input(p);
        WriteReport report;
        for (unsigned b = 0; b < config_.n_blocks; ++b) {
            auto& blk = blocks_[b];
            const auto a = static_cast<std::size_t>(address(b, c).bits);
            switch (blk.state[a]) {
            case SlotState::Empty:
                blk.state[a] = SlotState::Holds;
                blk.ea[a] = ea.value;
                break;
            case SlotState::Holds:
                if (blk.ea[a] == ea.value) break;
                report.collided_blocks.push_back(b);
                if (config_.rr_mode == CollisionPolicy::DontCare) {
                    blk.state[a] = SlotState::Poisoned;
                    blk.ea[a] = 0;
                }
                break;
            case SlotState::Poisoned:
                report.collided_blocks.push_back(b);
                break;
            }
        }
        if (config_.rr_mode == CollisionPolicy::Rescue && !report.collided_blocks.empty())
            rescue_[c.bits().to_bytes()] = ea.value;
        return report;
    }

    VoteResult read(const BitPolynomial& p) const {
        const BitPolynomial c = canonical_input(p);
        VoteResult v;
        v.n_blocks = config_.n_blocks;
        // At most N distinct candidates; a flat list beats a map here.
        std::vector<std::pair<std::uint64_t, unsigned>> tally;
        for (unsigned b = 0; b < config_.n_blocks; ++b) {
            const auto& blk = blocks_[b];
            const auto a = static_cast<std::size_t>(address(b, c).bits);
            if (blk.state[a] != SlotState::Holds) {
                ++v.abstentions;
                continue;
            }
            auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& t) { return t.first == blk.ea[a]; });
            if (it == tally.end())
                tally.emplace_back(blk.ea[a], 1u);
            else
                ++it->second;
        }

        const bool disagreement = v.abstentions > 0 || tally.size() > 1;
        if (config_.rr_mode == CollisionPolicy::Rescue && (disagreement || config_.rescue_always)) {
            if (auto hit = rescue_.find(c.bits().to_bytes()); hit != rescue_.end()) {
                v.winner = EntryAddress{hit->second};
                v.rescued = true;
                for (const auto& [ea, n] : tally) (ea == hit->second ? v.votes_for_winner : v.other_votes) += n;
                v.cr1 = 1.0;
                return v;
            }
        }

        if (tally.empty()) return v;
        // Highest tally wins; equal tallies go to the smaller entry address.
        auto best = tally.begin();
        for (auto it = tally.begin(); it != tally.end(); ++it)
            if (it->second > best->second || (it->second == best->second && it->first < best->first)) best = it;
        v.winner = EntryAddress{best->first};
        v.votes_for_winner = best->second;
        for (auto it = tally.begin(); it != tally.end(); ++it)
            if (it != best) v.other_votes += it->second;
        v.cr1 = static_cast<double>(v.votes_for_winner) / config_.n_blocks;
        return v;
    }

    /// New seed for one block (gated schedule only). Existing slots are left
    /// in place, so entries written under the old seed stop being addressable.
    void reseed(unsigned block, Residue seed) {
        if (config_.schedule != Schedule::Gated)
            throw Error(ErrorCode::ScheduleViolation, "reseeding requires the gated schedule");
        if (block >= config_.n_blocks) throw Error(ErrorCode::ConfigInvalid, "block index out of range");
        if (seed.bits & ~config_.generators[block].mask()) throw Error(ErrorCode::ConfigInvalid, "seed wider than m bits");
        config_.seeds[block] = seed;
    }

    SlotState slot_state(unsigned block, Residue addr) const { return blocks_.at(block).state.at(addr.bits); }

    SlotCounts slot_counts(unsigned block) const {
        SlotCounts c;
        for (auto s : blocks_.at(block).state) {
            if (s == SlotState::Empty) ++c.empty;
            else if (s == SlotState::Holds) ++c.holds;
            else ++c.poisoned;
        }
        return c;
    }

    std::size_t rescue_entries() const noexcept { return rescue_.size(); }

    bool rescue_contains(const BitPolynomial& p) const { return rescue_.contains(canonical_input(p).bits().to_bytes()); }

    // ---- snapshot (GMEM1) ---------------------------------------------------
    //
    //   "GMEM1"
    //   u64 len | config: u32 N, u32 m, u64 L, u8 rr, u8 schedule, u8 rescue_always,
    //                     u64 slot_budget, N x (u64 modulus, u8 verified, u64 seed)
    //   u64 len | slots:  per block, 2^m state bytes then 2^m u64 entry addresses
    //   u64 len | rescue: u64 count, then per entry sorted by key bytes:
    //                     u64 key length, key bytes, u64 entry address
    //
    // All integers little-endian.

    void save(std::ostream& os) const {
        std::string cfg;
        put_u32(cfg, config_.n_blocks);
        put_u32(cfg, config_.address_bits);
        put_u64(cfg, config_.input_length);
        cfg.push_back(static_cast<char>(config_.rr_mode));
        cfg.push_back(static_cast<char>(config_.schedule));
        cfg.push_back(static_cast<char>(config_.rescue_always));
        put_u64(cfg, config_.slot_budget);
        for (unsigned b = 0; b < config_.n_blocks; ++b) {
            put_u64(cfg, config_.generators[b].modulus());
            cfg.push_back(static_cast<char>(config_.generators[b].primitive_verified()));
            put_u64(cfg, config_.seeds[b].bits);
        }

        std::string slots;
        slots.reserve(total_slots() * 9);
        for (const auto& blk : blocks_) {
            for (auto s : blk.state) slots.push_back(static_cast<char>(s));
            for (auto e : blk.ea) put_u64(slots, e);
        }

        std::map<std::string, std::uint64_t> sorted(rescue_.begin(), rescue_.end());
        std::string rescue;
        put_u64(rescue, sorted.size());
        for (const auto& [key, ea] : sorted) {
            put_u64(rescue, key.size());
            rescue += key;
            put_u64(rescue, ea);
        }

        os.write("GMEM1", 5);
        for (const std::string* section : {&cfg, &slots, &rescue}) {
            std::string len;
            put_u64(len, section->size());
            os.write(len.data(), static_cast<std::streamsize>(len.size()));
            os.write(section->data(), static_cast<std::streamsize>(section->size()));
        }
    }

    std::string snapshot_bytes() const {
        std::ostringstream os(std::ios::binary);
        save(os);
        return std::move(os).str();
    }

    static BlockMemory load(std::istream& is) {
        char magic[5];
        if (!is.read(magic, 5) || std::memcmp(magic, "GMEM1", 5) != 0)
            throw Error(ErrorCode::SnapshotCorrupt, "missing GMEM1 magic");
        Reader cfg(read_section(is));
        MemoryConfig c;
        c.n_blocks = cfg.u32();
        c.address_bits = cfg.u32();
        c.input_length = cfg.u64();
        const auto rr = cfg.u8(), sched = cfg.u8(), always = cfg.u8();
        if (rr > 1 || sched > 1 || always > 1) throw Error(ErrorCode::SnapshotCorrupt, "bad enum byte in config");
        c.rr_mode = static_cast<CollisionPolicy>(rr);
        c.schedule = static_cast<Schedule>(sched);
        c.rescue_always = always != 0;
        c.slot_budget = cfg.u64();
        if (c.n_blocks == 0 || c.n_blocks > 4096) throw Error(ErrorCode::SnapshotCorrupt, "implausible block count");
        for (unsigned b = 0; b < c.n_blocks; ++b) {
            const std::uint64_t modulus = cfg.u64();
            const bool verified = cfg.u8() != 0;
            c.generators.push_back(verified ? Generator::attested(modulus) : Generator(modulus));
            c.seeds.push_back({cfg.u64()});
        }
        cfg.expect_end();

        std::optional<BlockMemory> loaded;
        try {
            loaded.emplace(std::move(c));
        } catch (const Error& e) {
            throw Error(ErrorCode::SnapshotCorrupt, std::string("stored config rejected: ") + e.what());
        }
        BlockMemory& mem = *loaded;
        Reader slots(read_section(is));
        for (auto& blk : mem.blocks_) {
            for (auto& s : blk.state) {
                const auto v = slots.u8();
                if (v > 2) throw Error(ErrorCode::SnapshotCorrupt, "bad slot state");
                s = static_cast<SlotState>(v);
            }
            for (auto& e : blk.ea) e = slots.u64();
        }
        slots.expect_end();

        Reader rescue(read_section(is));
        const std::uint64_t n = rescue.u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string key = rescue.bytes(rescue.u64());
            mem.rescue_[std::move(key)] = rescue.u64();
        }
        rescue.expect_end();
        if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::SnapshotCorrupt, "trailing bytes after snapshot");
        return std::move(*loaded);
    }

private:
    struct Block {
        std::vector<SlotState> state;
        std::vector<std::uint64_t> ea;
    };

    static void put_u32(std::string& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    static void put_u64(std::string& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    class Reader {
    public:
        explicit Reader(std::string data) : data_(std::move(data)) {}
        std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
        std::uint32_t u32() { return static_cast<std::uint32_t>(little(take(4), 4)); }
        std::uint64_t u64() { return little(take(8), 8); }
        std::string bytes(std::uint64_t n) { return std::string(take(n), n); }
        void expect_end() const {
            if (pos_ != data_.size()) throw Error(ErrorCode::SnapshotCorrupt, "trailing bytes in section");
        }

    private:
        const char* take(std::uint64_t n) {
            if (n > data_.size() - pos_) throw Error(ErrorCode::SnapshotCorrupt, "section truncated");
            const char* p = data_.data() + pos_;
            pos_ += n;
            return p;
        }
        static std::uint64_t little(const char* p, int n) {
            std::uint64_t v = 0;
            for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(p[i]);
            return v;
        }
        std::string data_;
        std::size_t pos_ = 0;
    };

    static std::string read_section(std::istream& is) {
        char len_bytes[8];
        if (!is.read(len_bytes, 8)) throw Error(ErrorCode::SnapshotCorrupt, "missing section length");
        std::uint64_t len = 0;
        for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<std::uint8_t>(len_bytes[i]);
        if (len > (std::uint64_t{1} << 34)) throw Error(ErrorCode::SnapshotCorrupt, "implausible section length");
        std::string s(len, '\0');
        if (!is.read(s.data(), static_cast<std::streamsize>(len))) throw Error(ErrorCode::SnapshotCorrupt, "section truncated");
        return s;
    }

    MemoryConfig config_;
    std::vector<Block> blocks_;
    std::unordered_map<std::string, std::uint64_t> rescue_;
};

/// An input that lands on the same slot as `key` in block `block` (its
/// segment differs from key's by G(x) * x^s, a kernel element) and on
/// unrelated slots elsewhere. Needs segment length q > m.
inline BitPolynomial make_block_collider(const BlockMemory& mem, const BitPolynomial& key, unsigned block, CounterRng& rng) {
    const auto& cfg = mem.config();
    const std::size_t q = cfg.segment_length();
    const unsigned m = cfg.address_bits;
    if (q <= m) throw Error(ErrorCode::ConfigInvalid, "segment length must exceed m to construct a kernel collision");
    if (block >= cfg.n_blocks) throw Error(ErrorCode::ConfigInvalid, "block index out of range");
    const BitPolynomial c = mem.canonical_input(key);
    BitPolynomial out(cfg.input_length);
    for (std::size_t j = 0; j < cfg.input_length; ++j) {
        const std::size_t seg = j / q;
        out.set_coeff(j, seg == block ? c.coeff(j) : (rng() & 1u) != 0);
    }
    const std::size_t shift = rng.below(q - m);
    const std::uint64_t modulus = cfg.generators[block].modulus();
    for (unsigned i = 0; i <= m; ++i)
        if ((modulus >> i) & 1u) out.flip(block * q + shift + i);
    return out;
}

} // namespace galmem
