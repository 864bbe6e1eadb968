// avsr/common.h

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

#ifndef AVSR_COMMON_H_
#define AVSR_COMMON_H_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avsr {

// Base of every error thrown by the library.  Anything that is not a
// ValidationError is treated as a runtime failure by the command line tool.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

// Malformed user input: config files, manifests, data files, arguments.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string &what) : Error(what) {}
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string &what) : Error(what) {}
};

#define AVSR_ERR(msg)                         \
  do {                                        \
    std::ostringstream avsr_os_;              \
    avsr_os_ << msg;                          \
    throw ::avsr::Error(avsr_os_.str());      \
  } while (0)

#define AVSR_INVALID(msg)                         \
  do {                                            \
    std::ostringstream avsr_os_;                  \
    avsr_os_ << msg;                              \
    throw ::avsr::ValidationError(avsr_os_.str()); \
  } while (0)

#define AVSR_ASSERT(cond)                                              \
  do {                                                                 \
    if (!(cond)) AVSR_ERR("assertion failed: " #cond " at " << __FILE__ \
                          << ":" << __LINE__);                         \
  } while (0)

// Verbosity: 0 = warnings only, 1 = progress, 2 = debug.
int GetVerboseLevel();
void SetVerboseLevel(int level);
void LogMessage(std::string_view prefix, const std::string &msg);

#define AVSR_LOG(msg)                                   \
  do {                                                  \
    if (::avsr::GetVerboseLevel() >= 1) {               \
      std::ostringstream avsr_os_;                      \
      avsr_os_ << msg;                                  \
      ::avsr::LogMessage("LOG", avsr_os_.str());        \
    }                                                   \
  } while (0)

#define AVSR_WARN(msg)                                  \
  do {                                                  \
    std::ostringstream avsr_os_;                        \
    avsr_os_ << msg;                                    \
    ::avsr::LogMessage("WARNING", avsr_os_.str());      \
  } while (0)

// 64-bit FNV-1a.  Used for fingerprints and parameter hashes, so the value
// must never depend on the platform.
class Fnv1a {
 public:
  void Update(const void *data, std::size_t n);
  void Update(std::string_view s) { Update(s.data(), s.size()); }
  template <typename T>
  void UpdateValue(const T &v) { Update(&v, sizeof(T)); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string HexDigest(std::uint64_t v);

// Whole-file binary I/O.  A missing input file is a ValidationError.
std::string ReadFileBytes(const std::string &path);
void WriteFileBytes(const std::string &path, const std::string &bytes);

using Rng = std::mt19937_64;

// Derives an independent generator from a base seed and a list of integer
// coordinates (stage, epoch, sample index, ...).  Streams derived this way do
// not depend on the order in which they are requested.
Rng DeriveRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Uniform in [0, 1), built directly on the engine output so the sequence is
// identical across standard library implementations.
double UniformUnit(Rng &rng);
double UniformRange(Rng &rng, double lo, double hi);
int UniformInt(Rng &rng, int lo, int hi);  // inclusive range
// Standard normal via Box-Muller; stateless between calls.
double Gaussian(Rng &rng);

}  // namespace avsr

#endif  // AVSR_COMMON_H_
