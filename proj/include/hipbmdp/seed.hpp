#pragma once

#include <cstdint>

namespace hipbmdp {

/// splitmix64 finalizer applied to a combination of two words; used to derive
/// independent child seeds from (parent seed, stream tag).
constexpr std::uint64_t mix_seed(std::uint64_t parent, std::uint64_t tag) {
    std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace hipbmdp
