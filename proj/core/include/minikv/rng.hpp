#pragma once

#include <cstdint>

namespace minikv {

// splitmix64 with derived substreams. Gaussian draws use Box-Muller over two
// uniforms so the sequence is fully pinned by the seed.
class Rng {
public:
    static constexpr const char* kName = "splitmix64+box-muller";

    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Independent substream; does not advance this generator.
    Rng stream(std::uint64_t stream_id) const {
        std::uint64_t z = state_ ^ (0xD1B54A32D192ED03ull * (stream_id + 1));
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
        return Rng(z ^ (z >> 33));
    }

    // [0, 1)
    float next_uniform() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    float next_gaussian();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace minikv
