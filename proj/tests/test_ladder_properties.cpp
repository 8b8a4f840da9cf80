// Ladder invariants on randomized synthetic sequences.
#include <gtest/gtest.h>

#include <cmath>

#include "mtdeblur/blur.hpp"
#include "mtdeblur/hashing.hpp"
#include "ladder_checks.hpp"

TEST(LadderProperties, HoldOnRandomSequences) {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const auto r = ladder_checks::check_random_sequence(mtdeblur::derive_seed({77, trial}));
    EXPECT_TRUE(r.center_identity) << "trial " << trial;
    EXPECT_LE(r.max_mean_error, 1e-6) << "trial " << trial;
    EXPECT_LE(r.max_nesting_error, 1e-6) << "trial " << trial;
  }
}
