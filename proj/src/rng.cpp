// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/rng.hpp"

namespace liftrefine {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.mutable_data()) v = stddev * normal();
    return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.mutable_data()) v = uniform(lo, hi);
    return t;
}

} // namespace liftrefine
