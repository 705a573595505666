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

#include "pcpr/random.h"

#include <cmath>
#include <numeric>

namespace pcpr {

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a of the tag.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return DeriveSeed(seed, h);
}

std::int64_t UniformIndex(Rng& rng, std::int64_t n) {
  if (n <= 0) throw Error("UniformIndex: empty range");
  const auto range = static_cast<std::uint64_t>(n);
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = Rng::max() - (Rng::max() % range);
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return static_cast<std::int64_t>(draw % range);
}

double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double StandardNormal(Rng& rng) {
  // Box-Muller; one draw per call keeps the stream position easy to reason
  // about.
  double u1;
  do {
    u1 = Uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Gamma(Rng& rng, double shape) {
  if (shape <= 0.0) throw Error("Gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale.
    const double u = Uniform01(rng);
    return Gamma(rng, shape + 1.0) * std::pow(u > 0.0 ? u : 1e-300, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = StandardNormal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = Uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

double Beta(Rng& rng, double a, double b) {
  const double x = Gamma(rng, a);
  const double y = Gamma(rng, b);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

void Shuffle(IndexList& values, Rng& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(values.size()) - 1; i > 0; --i) {
    std::swap(values[i], values[UniformIndex(rng, i + 1)]);
  }
}

IndexList Permutation(std::int64_t n, Rng& rng) {
  IndexList out(n);
  std::iota(out.begin(), out.end(), 0);
  Shuffle(out, rng);
  return out;
}

}  // namespace pcpr
