// Built with SWREC_INSTRUMENT so forward passes count multiply-accumulates.
#include <gtest/gtest.h>

#include "support.hpp"

using namespace swrec;

TEST(Instrumented, ForwardCostIsTwoMR) {
  for (auto [m, K, R] : {std::tuple<std::size_t, std::size_t, std::size_t>{50, 10, 3}, {200, 40, 4}, {9, 3, 3}}) {
    const auto model = init_model<double>(swtest::random_mask(m, K, R, m), 1);
    std::vector<double> x(m, 0.0);
    for (std::size_t i = 0; i < m; i += 3) x[i] = 1.0;
    mac_counter() = 0;
    forward(model, std::span<const double>(x));
    EXPECT_EQ(mac_counter(), 2u * m * R);
  }
}
