// avsr/common.cc

// Copyright 2026  The avsr Authors

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

#include "avsr/common.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <iostream>
#include <numbers>

namespace avsr {

namespace {
int g_verbose_level = 1;
}

int GetVerboseLevel() { return g_verbose_level; }
void SetVerboseLevel(int level) { g_verbose_level = level; }

void LogMessage(std::string_view prefix, const std::string &msg) {
  std::cerr << prefix << " (avsr) " << msg << '\n';
}

void Fnv1a::Update(const void *data, std::size_t n) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ULL;
  }
}

std::string ReadFileBytes(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) AVSR_INVALID("cannot open " << path);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::string &path, const std::string &bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) AVSR_ERR("cannot open " << path << " for writing");
  os.write(bytes.data(), bytes.size());
  if (!os) AVSR_ERR("failed writing " << path);
}

std::string HexDigest(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

Rng DeriveRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  // splitmix64 chain over the coordinates.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t p : path) h = mix(h ^ mix(p + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

double UniformUnit(Rng &rng) {
  // 53 random bits.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double UniformRange(Rng &rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

int UniformInt(Rng &rng, int lo, int hi) {
  AVSR_ASSERT(hi >= lo);
  const double span = static_cast<double>(hi) - lo + 1.0;
  int v = lo + static_cast<int>(std::floor(UniformUnit(rng) * span));
  return v > hi ? hi : v;
}

double Gaussian(Rng &rng) {
  double u1 = UniformUnit(rng);
  double u2 = UniformUnit(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace avsr
