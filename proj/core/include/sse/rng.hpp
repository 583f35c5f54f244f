#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace sse {

/// Deterministic random stream: xoshiro256++ seeded through splitmix64.
/// Identical seed gives an identical draw sequence on every platform; the
/// generator and the Gaussian transform (Box-Muller) are fixed by contract,
/// not implementation details.
///
/// Independent streams (one per sampled model, per purpose) come from
/// split(): children are keyed on (seed, stream_id), so the order in which
/// workers consume them cannot change any sequence.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double next_double();

    /// Uniform in [0, bound) for index/shuffle use.
    std::uint64_t next_below(std::uint64_t bound);

    /// One N(mean, std^2) draw via Box-Muller; consumes two uniforms, keeps
    /// no state across calls. std must be >= 0 (std == 0 returns mean).
    double next_gaussian(double mean, double stddev);

    /// Fills out with i.i.d. N(mean, std^2); pairs of draws share one
    /// Box-Muller transform, an odd tail discards the spare.
    void fill_gaussian(std::span<double> out, double mean, double stddev);
    std::vector<double> gaussian(std::size_t n, double mean, double stddev);

    /// Deterministic child stream for (this stream's seed, stream_id).
    RngStream split(std::uint64_t stream_id) const;

    /// Fisher-Yates shuffle of an index vector.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_;
};

}  // namespace sse
