#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ostr/audio.hpp"
#include "ostr/rng.hpp"
#include "ostr/spectral.hpp"

namespace ostr::nn {

// Dense row-major matrix of 64-bit reals. Construction rejects NaN/Inf so a
// poisoned value surfaces where it is produced, not three modules later.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix randn(std::size_t rows, std::size_t cols, Rng& rng, double scale);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void check_finite() const;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);  // a^T b
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);  // a b^T
Matrix transpose(const Matrix& a);

// Named parameters with paired gradient accumulators and Adam moments.
// Iteration order is the map's name order, so training is reproducible.
class ParamStore {
public:
    struct Entry {
        Matrix value, grad, m, v;
    };

    Matrix& add(const std::string& name, Matrix init);
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Matrix& value(const std::string& name) { return entries_.at(name).value; }
    const Matrix& value(const std::string& name) const { return entries_.at(name).value; }
    Matrix& grad(const std::string& name) { return entries_.at(name).grad; }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }
    void zero_grads();

    std::int64_t step_count() const { return step_; }
    void set_step_count(std::int64_t s) { step_ = s; }

    // Flat binary container: magic "OSTR", u32 version, then repeated
    // (u32 name length, name, u32 rows, u32 cols, row-major f64), little-endian.
    std::vector<unsigned char> to_bytes() const;
    static ParamStore from_bytes(const std::vector<unsigned char>& bytes);
    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected first/second-moment update over every parameter.
void adam_step(ParamStore& params, double lr, const AdamConfig& cfg = {});

// y = xW + b with b broadcast across rows; b has shape 1 x out.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);
struct LinearGrads {
    Matrix dx, dw, db;
};
LinearGrads linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy);

// softmax(Q K^T / sqrt(d)) V. The cache holds the attention weights for backward.
struct AttentionCache {
    Matrix attn;
};
Matrix cross_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                       AttentionCache* cache = nullptr);
struct AttentionGrads {
    Matrix dq, dk, dv;
};
AttentionGrads cross_attention_backward(const Matrix& queries, const Matrix& keys,
                                        const Matrix& values, const AttentionCache& cache,
                                        const Matrix& dy);

// Rotates consecutive value pairs of each row by pos * theta_i with
// theta_i = base^(-2i/d); norm-preserving, inner products depend only on
// relative position.
Matrix rope_rotate(const Matrix& x, const std::vector<std::int64_t>& positions,
                   double base = 10000.0);
Matrix rope_rotate_backward(const Matrix& dy, const std::vector<std::int64_t>& positions,
                            double base = 10000.0);

// max(0, |a-p|^2 - |a-n|^2 + margin) with subgradient 0 at the hinge.
struct TripletResult {
    double loss = 0.0;
    std::vector<double> d_anchor, d_positive, d_negative;
};
TripletResult triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                           const std::vector<double>& negative, double margin);

// Mean absolute sample error; gradient w.r.t. est is sign(est - ref)/N.
double time_mae(const AudioClip& est, const AudioClip& ref, AudioClip* grad_est = nullptr);

// Mean over configs of the mean |dRe| + |dIm| between the two complex STFTs;
// the gradient flows back through the transform's adjoint.
double multires_spec_mae(const AudioClip& est, const AudioClip& ref,
                         const std::vector<StftConfig>& configs, AudioClip* grad_est = nullptr);

inline std::vector<StftConfig> default_multires_configs() {
    return {{512, 128, false}, {1024, 256, false}, {2048, 512, false}};
}

struct GradCheckReport {
    double step = 0.0;
    std::map<std::string, double> max_rel_err;  // per parameter

    double worst() const {
        double w = 0.0;
        for (const auto& [name, e] : max_rel_err) w = std::max(w, e);
        return w;
    }
};

// loss(params, with_grad): evaluates the scalar loss; when with_grad is set it
// must also leave analytic gradients in the store. Central differences with
// the given step; relative error |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<double(ParamStore&, bool)>& loss,
                           ParamStore& params, double step = 1e-5);

}  // namespace ostr::nn
