#include "oir/kernels.hpp"

namespace oir::simd {
namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

float dot_f32(const float* a, const float* b, std::size_t n) { return dot_ref(a, b, n); }
double dot_f64(const double* a, const double* b, std::size_t n) { return dot_ref(a, b, n); }
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) { axpy_ref(alpha, x, y, n); }
void axpy_f64(double alpha, const double* x, double* y, std::size_t n) { axpy_ref(alpha, x, y, n); }

void autocorr_f32(const float* x, std::size_t n, std::size_t lag_min, std::size_t lag_max,
                  float* out) {
  for (std::size_t k = lag_min; k <= lag_max; ++k) {
    out[k - lag_min] = k < n ? dot_ref(x, x + k, n - k) : 0.0f;
  }
}

float sum_squares_f32(const float* x, std::size_t n) { return dot_ref(x, x, n); }

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, dot_f32,      dot_f64,        axpy_f32,
                                 axpy_f64,    autocorr_f32, sum_squares_f32};
  return table;
}

}  // namespace oir::simd
