#include <doctest.h>

#include <cmath>
#include <initializer_list>
#include <stdexcept>

#include "morphdet/contrastive.hpp"

using namespace morphdet;

TEST_CASE("loss values from the definition") {
    CHECK(contrastive_loss(0.0, 0, 1.0) == 0.0);
    CHECK(contrastive_loss(1.5, 1, 1.0) == 0.0);
    CHECK(contrastive_loss(0.4, 1, 1.0) == doctest::Approx(0.36));
    CHECK(contrastive_loss(0.3, 0, 1.0) == doctest::Approx(0.09));
    CHECK(contrastive_loss(2.0, 0, 1.0) == doctest::Approx(4.0));
}

TEST_CASE("gradient values from the definition") {
    CHECK(contrastive_loss_gradient(0.4, 1, 1.0) == doctest::Approx(-1.2));
    CHECK(contrastive_loss_gradient(2.0, 1, 1.0) == 0.0);
    CHECK(contrastive_loss_gradient(0.3, 0, 1.0) == doctest::Approx(0.6));
}

TEST_CASE("analytic gradient matches central finite differences") {
    const double eps = 1e-7;
    for (double m : {0.5, 1.0, 2.0}) {
        for (int y : {0, 1}) {
            for (double d = 0.1; d <= 2.05; d += 0.1) {
                if (y == 1 && std::abs(d - m) < 1e-9) continue;  // hinge kink
                const double fd = (contrastive_loss(d + eps, y, m) -
                                   contrastive_loss(d - eps, y, m)) /
                                  (2.0 * eps);
                const double an = contrastive_loss_gradient(d, y, m);
                if (std::abs(an) < 1e-12)
                    CHECK(std::abs(fd) < 1e-5);
                else
                    CHECK(std::abs(fd - an) / std::abs(an) < 1e-5);
            }
        }
    }
}

TEST_CASE("loss shape properties") {
    // non-negative everywhere
    for (double d = 0.0; d <= 3.0; d += 0.25)
        for (int y : {0, 1}) CHECK(contrastive_loss(d, y, 1.0) >= 0.0);
    // genuine loss increases with distance
    for (double d = 0.0; d < 2.9; d += 0.25)
        CHECK(contrastive_loss(d + 0.25, 0, 1.0) > contrastive_loss(d, 0, 1.0));
    // imposter loss non-increasing with distance
    for (double d = 0.0; d < 2.9; d += 0.25)
        CHECK(contrastive_loss(d + 0.25, 1, 1.0) <= contrastive_loss(d, 1, 1.0));
}

TEST_CASE("negative distance is a contract violation") {
    CHECK_THROWS_AS(contrastive_loss(-0.1, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(contrastive_loss_gradient(-0.1, 1, 1.0), std::invalid_argument);
}
