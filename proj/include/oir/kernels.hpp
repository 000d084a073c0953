#pragma once

// Data-parallel inner loops shared by the DSP and the fusion model.
//
// Each kernel has a scalar reference implementation and vectorized variants
// (AVX2+FMA on x86-64, NEON on aarch64). The variant is chosen once at first
// use from the running CPU's capabilities; OIR_SIMD=scalar in the environment
// forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace oir::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  // out[k - lag_min] = sum_i x[i] * x[i + k] for k in [lag_min, lag_max]
  void (*autocorr_f32)(const float* x, std::size_t n, std::size_t lag_min, std::size_t lag_max,
                       float* out);
  float (*sum_squares_f32)(const float* x, std::size_t n);
};

// Tables for each compiled-in variant; null when the variant is unavailable
// on this build or CPU.
const KernelTable& scalar_kernels();
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The table in use by the library.
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy_f64(alpha, x.data(), y.data(), x.size());
}

}  // namespace oir::simd
