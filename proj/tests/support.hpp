#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "oir/audio.hpp"
#include "oir/rng.hpp"

namespace oir::test {

inline audio::AudioBuffer tone(double hz, double seconds, double amp = 0.5, int sr = 16000) {
  audio::AudioBuffer b;
  b.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  b.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr));
  }
  return b;
}

// Exponential glide from f0 to f1 with continuous phase.
inline audio::AudioBuffer glide(double f0, double f1, double seconds, double amp = 0.5, int sr = 16000) {
  audio::AudioBuffer b;
  b.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  b.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = f0 * std::pow(f1 / f0, t / seconds);
    b.samples[i] = static_cast<float>(amp * std::sin(phase));
    phase += 2.0 * std::numbers::pi * f / sr;
  }
  return b;
}

inline audio::AudioBuffer silence(double seconds, int sr = 16000) {
  audio::AudioBuffer b;
  b.sample_rate = sr;
  b.samples.assign(static_cast<std::size_t>(seconds * sr), 0.0f);
  return b;
}

inline audio::AudioBuffer concat(std::initializer_list<audio::AudioBuffer> parts) {
  audio::AudioBuffer b;
  for (const auto& p : parts) {
    b.sample_rate = p.sample_rate;
    b.samples.insert(b.samples.end(), p.samples.begin(), p.samples.end());
  }
  return b;
}

inline audio::AudioBuffer white_noise(double seconds, double amp, std::uint64_t seed, int sr = 16000) {
  Rng rng(seed);
  audio::AudioBuffer b;
  b.sample_rate = sr;
  b.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (auto& s : b.samples) s = static_cast<float>(amp * rng.normal());
  return b;
}

}  // namespace oir::test
