#include "sse/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sse {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
}

double RngStream::next_gaussian(double mean, double stddev) {
    double z[1];
    fill_gaussian(z, mean, stddev);
    return z[0];
}

void RngStream::fill_gaussian(std::span<double> out, double mean, double stddev) {
    if (stddev < 0.0) throw std::invalid_argument("fill_gaussian: negative stddev");
    for (std::size_t i = 0; i < out.size(); i += 2) {
        // u1 in (0,1] so the log is finite; u2 in [0,1).
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi_v<double> * u2;
        out[i] = mean + stddev * (r * std::cos(a));
        if (i + 1 < out.size()) out[i + 1] = mean + stddev * (r * std::sin(a));
    }
}

std::vector<double> RngStream::gaussian(std::size_t n, double mean, double stddev) {
    std::vector<double> out(n);
    fill_gaussian(out, mean, stddev);
    return out;
}

RngStream RngStream::split(std::uint64_t stream_id) const {
    std::uint64_t x = seed_ ^ (0xD1B54A32D192ED03ULL * (stream_id + 1));
    return RngStream(splitmix64(x));
}

}  // namespace sse
