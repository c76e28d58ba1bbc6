// Copyright 2026  The wafersemi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef WAFERSEMI_RANDOM_H_
#define WAFERSEMI_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace wafersemi {

using Rng = std::mt19937_64;

// Mixes a base seed with a named stream so that independent consumers
// (data split, VAE init, teacher init, ...) draw from unrelated sequences.
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view stream);

inline Rng MakeRng(std::uint64_t base, std::string_view stream) {
  return Rng(DeriveSeed(base, stream));
}

double UniformReal(Rng& rng, double lo, double hi);
double StandardNormal(Rng& rng);
// Uniform integer in [lo, hi].
long UniformInt(Rng& rng, long lo, long hi);

}  // namespace wafersemi

#endif  // WAFERSEMI_RANDOM_H_
