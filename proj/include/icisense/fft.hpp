#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

namespace icisense {

/// Unnormalized 1-D complex DFT of a fixed length backed by FFTW.
///
/// forward:  X[k] = sum_n x[n] e^{-j 2 pi n k / n}
/// backward: x[n] = sum_k X[k] e^{+j 2 pi n k / n}
///
/// Inputs shorter than size() are zero-padded; input and output may alias.
/// Plans are shared process-wide, but each Fft owns its work buffers, so an
/// instance must not be used from two threads at once.
class Fft {
 public:
  explicit Fft(int n);
  ~Fft();
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;
  Fft(Fft&& other) noexcept;
  Fft& operator=(Fft&& other) noexcept;

  int size() const { return n_; }

  void forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);
  void backward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

  void forward(const Eigen::Ref<const Eigen::VectorXcd>& in, Eigen::Ref<Eigen::VectorXcd> out) {
    forward(std::span(in.data(), static_cast<size_t>(in.size())), std::span(out.data(), static_cast<size_t>(out.size())));
  }
  void backward(const Eigen::Ref<const Eigen::VectorXcd>& in, Eigen::Ref<Eigen::VectorXcd> out) {
    backward(std::span(in.data(), static_cast<size_t>(in.size())), std::span(out.data(), static_cast<size_t>(out.size())));
  }

 private:
  void run(void* plan, std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

  int n_ = 0;
  void* forward_plan_ = nullptr;
  void* backward_plan_ = nullptr;
  std::complex<double>* buf_in_ = nullptr;
  std::complex<double>* buf_out_ = nullptr;
};

/// Per-thread instance of length n, created on first use.
Fft& local_fft(int n);

}  // namespace icisense
