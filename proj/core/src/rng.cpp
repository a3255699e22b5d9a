#include "ppower/rng.hpp"

namespace ppower {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t index, std::uint64_t t, std::uint64_t channel) {
    // chain the coordinates through the mixer so nearby tuples decorrelate
    std::uint64_t k = splitmix64(seed);
    k = splitmix64(k ^ index);
    k = splitmix64(k ^ (t * 0x632be59bd9b4e019ULL));
    key_ = splitmix64(k ^ (channel + 0x2545f4914f6cdd1dULL));
}

StreamRng::result_type StreamRng::operator()() {
    ++counter_;
    return splitmix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double StreamRng::normal() { return gauss_(*this); }

double StreamRng::uniform() { return unit_(*this); }

void StreamRng::normals(Eigen::Ref<Eigen::VectorXd> out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = gauss_(*this);
}

}  // namespace ppower
