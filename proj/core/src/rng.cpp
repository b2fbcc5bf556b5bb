#include "minikv/rng.hpp"

#include <cmath>

namespace minikv {

float Rng::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    float u1 = next_uniform();
    const float u2 = next_uniform();
    if (u1 < 1e-12f) {
        u1 = 1e-12f;
    }
    const float r = std::sqrt(-2.0f * std::log(u1));
    const float theta = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace minikv
