#pragma once

#include <cstdint>
#include <random>

#include "codecomp/tensor.hpp"

CODECOMP_NN_BEGIN

/// Seeded parameter initializer (raw engine bits, platform independent).
class ParamInit {
public:
    explicit ParamInit(std::uint64_t seed) : engine_(seed) {}

    real uniform(real bound) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return static_cast<real>((2.0 * u - 1.0) * static_cast<double>(bound));
    }

    Tensor uniform(Shape shape, real bound) {
        Tensor t(std::move(shape));
        for (auto& v : t.data) v = uniform(bound);
        return t;
    }

    std::uint64_t next_seed() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

CODECOMP_NN_END
