#include "ostr/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace ostr {

namespace {
// The FFTW planner mutates global state; executing plans is thread-safe.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

struct RealFft::Impl {
    double* real = nullptr;
    fftw_complex* cplx = nullptr;
    fftw_complex* full_in = nullptr;
    fftw_complex* full_out = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    fftw_plan back = nullptr;  // c2c backward, for the adjoint
};

RealFft::RealFft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    impl_->real = fftw_alloc_real(n_);
    impl_->cplx = fftw_alloc_complex(n_ / 2 + 1);
    impl_->full_in = fftw_alloc_complex(n_);
    impl_->full_out = fftw_alloc_complex(n_);
    impl_->fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n_), impl_->real, impl_->cplx, FFTW_ESTIMATE);
    impl_->inv = fftw_plan_dft_c2r_1d(static_cast<int>(n_), impl_->cplx, impl_->real, FFTW_ESTIMATE);
    impl_->back = fftw_plan_dft_1d(static_cast<int>(n_), impl_->full_in, impl_->full_out,
                                   FFTW_BACKWARD, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(impl_->fwd);
    fftw_destroy_plan(impl_->inv);
    fftw_destroy_plan(impl_->back);
    fftw_free(impl_->real);
    fftw_free(impl_->cplx);
    fftw_free(impl_->full_in);
    fftw_free(impl_->full_out);
}

void RealFft::forward(const double* x, std::size_t len, std::complex<double>* out) const {
    const std::size_t copy = std::min(len, n_);
    std::memcpy(impl_->real, x, copy * sizeof(double));
    if (copy < n_) std::memset(impl_->real + copy, 0, (n_ - copy) * sizeof(double));
    fftw_execute(impl_->fwd);
    std::memcpy(out, impl_->cplx, bins() * sizeof(std::complex<double>));
}

void RealFft::inverse(const std::complex<double>* spec, double* out) const {
    std::memcpy(impl_->cplx, spec, bins() * sizeof(std::complex<double>));
    fftw_execute(impl_->inv);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = impl_->real[i] * scale;
}

void RealFft::adjoint(const std::complex<double>* g, double* out) const {
    std::memset(impl_->full_in, 0, n_ * sizeof(fftw_complex));
    std::memcpy(impl_->full_in, g, bins() * sizeof(std::complex<double>));
    fftw_execute(impl_->back);
    for (std::size_t i = 0; i < n_; ++i) out[i] = impl_->full_out[i][0];
}

}  // namespace ostr
