#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace cvqkd::rng {

// Counter-based generator: Philox4x32-10 (Salmon et al., "Parallel Random
// Numbers: As Easy as 1, 2, 3", SC'11). Multipliers 0xD2511F53/0xCD9E8D57,
// Weyl constants 0x9E3779B9/0xBB67AE85; the key is bumped between the ten
// rounds. Every output block is a pure function of (counter, key), which is
// what makes (seed, index) -> sample reproducible regardless of batching or
// worker scheduling.

struct Block {
    std::uint32_t x[4];
};

inline Block philox4x32(Block ctr, std::uint32_t k0, std::uint32_t k1) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr.x[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr.x[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        ctr = Block{{hi1 ^ ctr.x[1] ^ k0, lo1, hi0 ^ ctr.x[3] ^ k1, lo0}};
        if (round != 9) {
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
    }
    return ctr;
}

inline Block block_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const Block ctr{{static_cast<std::uint32_t>(index),
                     static_cast<std::uint32_t>(index >> 32),
                     static_cast<std::uint32_t>(stream),
                     static_cast<std::uint32_t>(stream >> 32)}};
    return philox4x32(ctr, static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32));
}

inline std::uint64_t u64_from(const Block& b, int lane_pair) {
    return (static_cast<std::uint64_t>(b.x[2 * lane_pair + 1]) << 32) | b.x[2 * lane_pair];
}

// Substream derivation rule: the seed of substream (index, purpose) under a
// master seed is one Philox block of the master key at counter
// {index_lo, index_hi, purpose, 0x5EED5EED}. Documented so that trial
// scheduling can never affect which stream a trial consumes.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint32_t purpose) {
    const Block ctr{{static_cast<std::uint32_t>(index),
                     static_cast<std::uint32_t>(index >> 32),
                     purpose, 0x5EED5EEDu}};
    const Block out = philox4x32(ctr, static_cast<std::uint32_t>(master),
                                 static_cast<std::uint32_t>(master >> 32));
    return u64_from(out, 0);
}

// Stream purposes used by the simulation harness.
enum Purpose : std::uint32_t {
    kPurposeModulation = 1,   // x_M, or x_M1 in double mode
    kPurposeModulation2 = 2,  // x_M2 in double mode
    kPurposeSqueeze = 3,      // x_s
    kPurposeChannelNoise = 4, // loss vacuum + excess noise
    kPurposeShuffle = 5,      // PE/key partition
};

// Stateless stream of standard normals. Sample i consumes exactly the Philox
// block at counter index i: lanes (0,1) build u1 in (0,1], lanes (2,3) build
// u2 in [0,1), and the sample is the Box-Muller cosine branch
// sqrt(-2 ln u1) * cos(2 pi u2).
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    double operator()(std::uint64_t i) const {
        const Block b = block_at(seed_, stream_, i);
        const double u1 = static_cast<double>((u64_from(b, 0) >> 11) + 1) * 0x1.0p-53;
        const double u2 = static_cast<double>(u64_from(b, 1) >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    void fill(std::span<double> out, std::uint64_t first_index = 0) const {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (*this)(first_index + i);
    }

    std::vector<double> draw(std::size_t count, std::uint64_t first_index = 0) const {
        std::vector<double> v(count);
        fill(v, first_index);
        return v;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
};

// Uniform doubles in [0,1), same block layout (only the first lane pair).
class UniformStream {
  public:
    UniformStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    double operator()(std::uint64_t i) const {
        const Block b = block_at(seed_, stream_, i);
        return static_cast<double>(u64_from(b, 0) >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
};

} // namespace cvqkd::rng
