#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace ppower {

/// Counter-based generator. A stream is addressed by (seed, index, t, channel)
/// so any row of any instance can be regenerated without touching the others.
class StreamRng {
public:
    using result_type = std::uint64_t;

    StreamRng(std::uint64_t seed, std::uint64_t index, std::uint64_t t, std::uint64_t channel);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    double normal();
    /// uniform in [0,1)
    double uniform();
    /// fills a vector with iid N(0,1)
    void normals(Eigen::Ref<Eigen::VectorXd> out);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> gauss_;
    std::uniform_real_distribution<double> unit_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ppower
