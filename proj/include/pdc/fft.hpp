#pragma once

// Periodic 2-D spectral multipliers on row-major rows x cols images (FFTW).

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include "pdc/operators.hpp"

namespace pdc {

namespace detail {
// FFTW planning is not thread safe.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// r2c / c2r transform pair with owned buffers. Not reentrant: one instance
/// per run.
class RealFft2D {
 public:
  RealFft2D(Index rows, Index cols) : rows_(rows), cols_(cols), half_(cols / 2 + 1) {
    require(rows > 0 && cols > 0, ErrorCode::contract_violation, "empty FFT grid");
    real_ = fftw_alloc_real(size_t(rows * cols));
    spec_ = fftw_alloc_complex(size_t(rows * half_));
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(int(rows), int(cols), real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(int(rows), int(cols), spec_, real_, FFTW_ESTIMATE);
  }
  RealFft2D(const RealFft2D&) = delete;
  RealFft2D& operator=(const RealFft2D&) = delete;
  ~RealFft2D() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index spectrum_size() const { return rows_ * half_; }

  std::vector<std::complex<double>> forward(const Vec& x) {
    require_dim(x.size(), rows_ * cols_, "fft input");
    std::copy(x.data(), x.data() + x.size(), real_);
    fftw_execute(forward_);
    std::vector<std::complex<double>> out(static_cast<size_t>(spectrum_size()));
    for (Index i = 0; i < spectrum_size(); ++i) out[size_t(i)] = {spec_[i][0], spec_[i][1]};
    return out;
  }

  /// Unnormalized inverse; divide by rows*cols for the true inverse.
  Vec backward(const std::vector<std::complex<double>>& s) {
    for (Index i = 0; i < spectrum_size(); ++i) {
      spec_[i][0] = s[size_t(i)].real();
      spec_[i][1] = s[size_t(i)].imag();
    }
    fftw_execute(backward_);
    return Eigen::Map<Vec>(real_, rows_ * cols_);
  }

  /// x -> IFFT(m .* FFT(x)) for a real multiplier m on the half spectrum.
  Vec multiply(const Vec& x, const Vec& m) {
    auto s = forward(x);
    const double scale = 1.0 / double(rows_ * cols_);
    for (Index i = 0; i < spectrum_size(); ++i) s[size_t(i)] *= m[i] * scale;
    return backward(s);
  }

 private:
  Index rows_, cols_, half_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

/// Symbol of T^T T for a periodic shift-invariant map T from one image to
/// `op.out_dim() / (rows*cols)` stacked channels, read off its impulse response.
inline Vec normal_symbol(const LinearMap& op, Index rows, Index cols) {
  const Index n = rows * cols;
  require(op.in_dim() == n && op.out_dim() % n == 0, ErrorCode::contract_violation,
          "operator does not act on a rows x cols grid");
  RealFft2D fft(rows, cols);
  Vec delta = Vec::Zero(n);
  delta[0] = 1.0;
  const Vec response = op.apply(delta);
  Vec sym = Vec::Zero(fft.spectrum_size());
  for (Index c = 0; c < op.out_dim() / n; ++c) {
    const auto s = fft.forward(response.segment(c * n, n));
    for (Index i = 0; i < sym.size(); ++i) sym[i] += std::norm(s[size_t(i)]);
  }
  return sym;
}

/// SPD metric diagonal in the Fourier basis, with symbol `sym` (> 0).
inline Metric spectral_metric(Index rows, Index cols, Vec sym) {
  if (!(sym.minCoeff() > 0.0))
    throw Error(ErrorCode::singular_metric, "spectral symbol vanishes", sym.minCoeff());
  auto fft = std::make_shared<RealFft2D>(rows, cols);
  auto inv = std::make_shared<Vec>(sym.cwiseInverse());
  auto fwd = std::make_shared<Vec>(std::move(sym));
  return Metric::general(
      rows * cols, [fft, fwd](const Vec& x) { return fft->multiply(x, *fwd); },
      [fft, inv](const Vec& x) { return fft->multiply(x, *inv); });
}

}  // namespace pdc
