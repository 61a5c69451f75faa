#pragma once

// Dense-layer kernels. Weights are stored input-major: w[k * n_out + j] connects input k to output j.
// The OpenMP kernels split work over independent output rows and keep the summation order of every
// element identical to the serial references, so both produce bit-identical results for any job count.

#include <algorithm>
#include <cstddef>
#include <span>

#include <omp.h>

namespace qtaccel::kernels {

/// y[i,:] = b + x[i,:] * W, optionally rectified.
template <class T>
void dense_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
                   std::size_t rows, std::size_t n_in, std::size_t n_out, bool relu, int jobs) {
  const auto count = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
  for (long long r = 0; r < count; ++r) {
    const auto i = static_cast<std::size_t>(r);
    const T* xi = x.data() + i * n_in;
    T* yi = y.data() + i * n_out;
    std::copy(b.begin(), b.end(), yi);
    for (std::size_t k = 0; k < n_in; ++k) {
      const T xk = xi[k];
      const T* wk = w.data() + k * n_out;
      for (std::size_t j = 0; j < n_out; ++j)
        yi[j] += xk * wk[j];
    }
    if (relu)
      for (std::size_t j = 0; j < n_out; ++j)
        yi[j] = yi[j] > T(0) ? yi[j] : T(0);
  }
}

template <class T>
void dense_forward_serial(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
                          std::size_t rows, std::size_t n_in, std::size_t n_out, bool relu) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n_out; ++j) {
      T acc = b[j];
      for (std::size_t k = 0; k < n_in; ++k)
        acc += x[i * n_in + k] * w[k * n_out + j];
      y[i * n_out + j] = relu && !(acc > T(0)) ? T(0) : acc;
    }
}

/// dw[k,j] = sum_i x[i,k] * dy[i,j]; db[j] = sum_i dy[i,j].
template <class T>
void dense_backward_params(std::span<const T> x, std::span<const T> dy, std::span<T> dw, std::span<T> db,
                           std::size_t rows, std::size_t n_in, std::size_t n_out, int jobs) {
  const auto count = static_cast<long long>(n_in + 1);
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
  for (long long r = 0; r < count; ++r) {
    const auto k = static_cast<std::size_t>(r);
    T* out = k < n_in ? dw.data() + k * n_out : db.data();
    std::fill(out, out + n_out, T(0));
    for (std::size_t i = 0; i < rows; ++i) {
      const T xk = k < n_in ? x[i * n_in + k] : T(1);
      const T* dyi = dy.data() + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j)
        out[j] += xk * dyi[j];
    }
  }
}

template <class T>
void dense_backward_params_serial(std::span<const T> x, std::span<const T> dy, std::span<T> dw, std::span<T> db,
                                  std::size_t rows, std::size_t n_in, std::size_t n_out) {
  for (std::size_t j = 0; j < n_out; ++j) {
    for (std::size_t k = 0; k < n_in; ++k) {
      T acc = T(0);
      for (std::size_t i = 0; i < rows; ++i)
        acc += x[i * n_in + k] * dy[i * n_out + j];
      dw[k * n_out + j] = acc;
    }
    T acc = T(0);
    for (std::size_t i = 0; i < rows; ++i)
      acc += T(1) * dy[i * n_out + j];
    db[j] = acc;
  }
}

/// dx[i,k] = sum_j w[k,j] * dy[i,j], zeroed where the layer input was not positive (rectifier input).
template <class T>
void dense_backward_input(std::span<const T> w, std::span<const T> dy, std::span<const T> x, std::span<T> dx,
                          std::size_t rows, std::size_t n_in, std::size_t n_out, bool relu_input, int jobs) {
  const auto count = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
  for (long long r = 0; r < count; ++r) {
    const auto i = static_cast<std::size_t>(r);
    const T* dyi = dy.data() + i * n_out;
    for (std::size_t k = 0; k < n_in; ++k) {
      if (relu_input && !(x[i * n_in + k] > T(0))) {
        dx[i * n_in + k] = T(0);
        continue;
      }
      const T* wk = w.data() + k * n_out;
      T acc = T(0);
      for (std::size_t j = 0; j < n_out; ++j)
        acc += wk[j] * dyi[j];
      dx[i * n_in + k] = acc;
    }
  }
}

template <class T>
void dense_backward_input_serial(std::span<const T> w, std::span<const T> dy, std::span<const T> x, std::span<T> dx,
                                 std::size_t rows, std::size_t n_in, std::size_t n_out, bool relu_input) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < n_in; ++k) {
      T acc = T(0);
      for (std::size_t j = 0; j < n_out; ++j)
        acc += w[k * n_out + j] * dy[i * n_out + j];
      dx[i * n_in + k] = relu_input && !(x[i * n_in + k] > T(0)) ? T(0) : acc;
    }
}

} // namespace qtaccel::kernels
