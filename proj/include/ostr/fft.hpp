#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace ostr {

// Real-input FFT of a fixed size, backed by FFTW (double precision, plans
// created with FFTW_ESTIMATE so results never depend on run-time measurement).
// Instances are not thread-safe; create one per thread. Plan creation is
// serialized internally because the FFTW planner is a global resource.
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const { return n_; }
    std::size_t bins() const { return n_ / 2 + 1; }

    // X[k] = sum_n x[n] e^{-2*pi*i*k*n/N}, k = 0..N/2. x is zero-padded to N.
    void forward(const double* x, std::size_t len, std::complex<double>* out) const;

    // Inverse of forward assuming Hermitian symmetry; output scaled by 1/N.
    void inverse(const std::complex<double>* spec, double* out) const;

    // out[n] = Re( sum_{k=0}^{N/2} g[k] e^{+2*pi*i*k*n/N} ). This is the exact
    // adjoint of forward() restricted to the stored half spectrum, used by the
    // spectrogram-loss backward passes.
    void adjoint(const std::complex<double>* g, double* out) const;

private:
    struct Impl;
    std::size_t n_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ostr
