/*
 *  Copyright 2026 The VSMO Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "core/common.hpp"
#include "core/parallel.hpp"

namespace vsmo {
namespace {

TEST(Common, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Common, FwhmToSigma) {
  // A Gaussian of that sigma is at half maximum at fwhm / 2.
  for (double fwhm : {1.0, 9.4, 28.2}) {
    const double s = fwhm_to_sigma(fwhm);
    EXPECT_NEAR(std::exp(-0.5 * (fwhm / 2) * (fwhm / 2) / (s * s)), 0.5, 1e-14);
  }
}

TEST(Common, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "sweep"), derive_seed(1, "sweep"));
  EXPECT_NE(derive_seed(1, "sweep"), derive_seed(2, "sweep"));
  EXPECT_NE(derive_seed(1, "sweep"), derive_seed(1, "study"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(Common, DistanceAndErrors) {
  EXPECT_DOUBLE_EQ(distance({0, 0}, {3, 4}), 5.0);
  EXPECT_STREQ(error_code_name(ErrorCode::session_complete), "session-complete");
  try {
    require(false, ErrorCode::conflict, "boom");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conflict);
    EXPECT_STREQ(e.what(), "boom");
  }
}

TEST(Common, ParallelForVisitsEveryIndexOnce) {
  for (int threads : {1, 3}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) ASSERT_EQ(h, 1);
  }
}

}  // namespace
}  // namespace vsmo
