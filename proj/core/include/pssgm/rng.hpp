#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace pssgm {

/// Top-level stream ids derived from the single run seed. Every random draw in
/// the library comes from NoiseSource{seed}.child(tag).child(...).
enum class StreamTag : std::uint64_t {
    data = 1,
    train = 2,
    reverse = 3,
    equilibrium = 4,
    relax = 5,
    cd1 = 6,
    eval = 7,
};

class RandomStream;

/// Identifies an independent random stream: (seed, stream id). Two sources with
/// the same pair reproduce the same variates in the same order.
class NoiseSource {
public:
    constexpr NoiseSource() = default;
    constexpr explicit NoiseSource(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Deterministic sub-stream, e.g. one per chain or per training snapshot.
    NoiseSource child(std::uint64_t index) const noexcept;
    NoiseSource child(StreamTag tag) const noexcept {
        return child(static_cast<std::uint64_t>(tag));
    }

    RandomStream open() const;

    friend bool operator==(const NoiseSource&, const NoiseSource&) = default;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
};

/// Sequential draws from one NoiseSource.
class RandomStream {
public:
    explicit RandomStream(const NoiseSource& source);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::size_t index(std::size_t n);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace pssgm
