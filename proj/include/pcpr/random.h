/*
 * Copyright 2026 The pcpr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCPR_RANDOM_H_
#define PCPR_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

#include "pcpr/common.h"

namespace pcpr {

using Rng = std::mt19937_64;

// Mixes a parent seed with a stream tag so that independent consumers (split,
// initialization of each sub-network, corruption, ...) never share a random
// stream. SplitMix64 finalizer.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view stream);

// Uniform integer in [0, n). Implemented on top of the raw engine output so
// that results do not depend on the standard library's distribution code.
std::int64_t UniformIndex(Rng& rng, std::int64_t n);

// Uniform real in [0, 1).
double Uniform01(Rng& rng);

double StandardNormal(Rng& rng);

// Gamma(shape, 1) by Marsaglia-Tsang.
double Gamma(Rng& rng, double shape);

// Beta(a, b) as a ratio of gammas.
double Beta(Rng& rng, double a, double b);

// Fisher-Yates shuffle driven by UniformIndex.
void Shuffle(IndexList& values, Rng& rng);

// 0..n-1 in random order.
IndexList Permutation(std::int64_t n, Rng& rng);

}  // namespace pcpr

#endif  // PCPR_RANDOM_H_
