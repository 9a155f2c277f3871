#include "icisense/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace icisense {
namespace {

struct PlanPair {
  fftw_plan forward;
  fftw_plan backward;
};

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

PlanPair shared_plans(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto* in = fftw_alloc_complex(static_cast<size_t>(n));
  auto* out = fftw_alloc_complex(static_cast<size_t>(n));
  // ESTIMATE keeps the chosen algorithm, and therefore every bit of output,
  // identical from run to run.
  PlanPair p{fftw_plan_dft_1d(n, in, out, FFTW_FORWARD, FFTW_ESTIMATE),
             fftw_plan_dft_1d(n, in, out, FFTW_BACKWARD, FFTW_ESTIMATE)};
  fftw_free(in);
  fftw_free(out);
  cache.emplace(n, p);
  return p;
}

}  // namespace

Fft::Fft(int n) : n_(n) {
  if (n <= 0) throw std::invalid_argument("Fft: length must be positive");
  auto plans = shared_plans(n);
  forward_plan_ = plans.forward;
  backward_plan_ = plans.backward;
  buf_in_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(static_cast<size_t>(n)));
  buf_out_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(static_cast<size_t>(n)));
}

Fft::~Fft() {
  if (buf_in_) fftw_free(buf_in_);
  if (buf_out_) fftw_free(buf_out_);
}

Fft::Fft(Fft&& other) noexcept
    : n_(other.n_),
      forward_plan_(other.forward_plan_),
      backward_plan_(other.backward_plan_),
      buf_in_(std::exchange(other.buf_in_, nullptr)),
      buf_out_(std::exchange(other.buf_out_, nullptr)) {}

Fft& Fft::operator=(Fft&& other) noexcept {
  if (this != &other) {
    if (buf_in_) fftw_free(buf_in_);
    if (buf_out_) fftw_free(buf_out_);
    n_ = other.n_;
    forward_plan_ = other.forward_plan_;
    backward_plan_ = other.backward_plan_;
    buf_in_ = std::exchange(other.buf_in_, nullptr);
    buf_out_ = std::exchange(other.buf_out_, nullptr);
  }
  return *this;
}

void Fft::forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
  run(forward_plan_, in, out);
}

void Fft::backward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
  run(backward_plan_, in, out);
}

void Fft::run(void* plan, std::span<const std::complex<double>> in,
              std::span<std::complex<double>> out) {
  if (in.size() > static_cast<size_t>(n_) || out.size() < static_cast<size_t>(n_))
    throw std::invalid_argument("Fft: buffer length mismatch");
  std::copy(in.begin(), in.end(), buf_in_);
  std::fill(buf_in_ + in.size(), buf_in_ + n_, std::complex<double>{});
  fftw_execute_dft(static_cast<fftw_plan>(plan), reinterpret_cast<fftw_complex*>(buf_in_),
                   reinterpret_cast<fftw_complex*>(buf_out_));
  std::copy(buf_out_, buf_out_ + n_, out.begin());
}

Fft& local_fft(int n) {
  thread_local std::map<int, Fft> pool;
  auto it = pool.find(n);
  if (it == pool.end()) it = pool.emplace(n, Fft(n)).first;
  return it->second;
}

}  // namespace icisense
