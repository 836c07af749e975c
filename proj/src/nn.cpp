#include "ostr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ostr/fft.hpp"

namespace ostr::nn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("matrix data size mismatch");
    check_finite();
}

void Matrix::check_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) throw std::invalid_argument("matrix contains a non-finite value");
}

Matrix Matrix::randn(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal() * scale;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions disagree");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = a(i, k);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += av * b(k, j);
        }
    return out;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_transpose_a: row counts disagree");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double av = a(k, i);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += av * b(k, j);
        }
    return out;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_transpose_b: column counts disagree");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
            out(i, j) = acc;
        }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix& ParamStore::add(const std::string& name, Matrix init) {
    if (has(name)) throw std::invalid_argument("parameter already registered: " + name);
    Entry e;
    e.grad = Matrix(init.rows(), init.cols());
    e.m = Matrix(init.rows(), init.cols());
    e.v = Matrix(init.rows(), init.cols());
    e.value = std::move(init);
    auto [it, _] = entries_.emplace(name, std::move(e));
    return it->second.value;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries_) std::fill(e.grad.data().begin(), e.grad.data().end(), 0.0);
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw std::runtime_error("parameter container truncated");
    std::uint32_t v = in[pos] | (in[pos + 1] << 8) | (in[pos + 2] << 16) |
                      (static_cast<std::uint32_t>(in[pos + 3]) << 24);
    pos += 4;
    return v;
}

void put_f64(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::vector<unsigned char>& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw std::runtime_error("parameter container truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr char kMagic[4] = {'O', 'S', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<unsigned char> ParamStore::to_bytes() const {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    for (const auto& [name, e] : entries_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(e.value.rows()));
        put_u32(out, static_cast<std::uint32_t>(e.value.cols()));
        for (double d : e.value.data()) put_f64(out, d);
    }
    return out;
}

ParamStore ParamStore::from_bytes(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("not a parameter container (bad magic)");
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kVersion) throw std::runtime_error("unsupported container version");

    ParamStore store;
    while (pos < bytes.size()) {
        const std::uint32_t name_len = get_u32(bytes, pos);
        if (pos + name_len > bytes.size()) throw std::runtime_error("parameter container truncated");
        std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
        pos += name_len;
        const std::uint32_t rows = get_u32(bytes, pos);
        const std::uint32_t cols = get_u32(bytes, pos);
        std::vector<double> data(static_cast<std::size_t>(rows) * cols);
        for (double& d : data) d = get_f64(bytes, pos);
        store.add(name, Matrix(rows, cols, std::move(data)));
    }
    return store;
}

void ParamStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    const auto bytes = to_bytes();
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return from_bytes(bytes);
}

void adam_step(ParamStore& params, double lr, const AdamConfig& cfg) {
    params.set_step_count(params.step_count() + 1);
    const auto t = static_cast<double>(params.step_count());
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, e] : params.entries()) {
        auto& w = e.value.data();
        auto& g = e.grad.data();
        auto& m = e.m.data();
        auto& v = e.v.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    if (b.rows() != 1 || b.cols() != w.cols())
        throw std::invalid_argument("linear: bias must be 1 x out");
    Matrix y = matmul(x, w);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
    return y;
}

LinearGrads linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy) {
    LinearGrads g;
    g.dx = matmul_transpose_b(dy, w);
    g.dw = matmul_transpose_a(x, dy);
    g.db = Matrix(1, dy.cols());
    for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) g.db(0, j) += dy(i, j);
    return g;
}

namespace {

Matrix softmax_rows(const Matrix& z) {
    Matrix a(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            a(i, j) = std::exp(z(i, j) - mx);
            sum += a(i, j);
        }
        for (std::size_t j = 0; j < z.cols(); ++j) a(i, j) /= sum;
    }
    return a;
}

}  // namespace

Matrix cross_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                       AttentionCache* cache) {
    if (queries.cols() != keys.cols())
        throw std::invalid_argument("cross_attention: query/key widths differ");
    if (keys.rows() != values.rows())
        throw std::invalid_argument("cross_attention: key/value row counts differ");

    Matrix scores = matmul_transpose_b(queries, keys);
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    for (double& v : scores.data()) v *= scale;
    Matrix attn = softmax_rows(scores);
    Matrix out = matmul(attn, values);
    if (cache) cache->attn = std::move(attn);
    return out;
}

AttentionGrads cross_attention_backward(const Matrix& queries, const Matrix& keys,
                                        const Matrix& values, const AttentionCache& cache,
                                        const Matrix& dy) {
    const Matrix& attn = cache.attn;
    AttentionGrads g;
    g.dv = matmul_transpose_a(attn, dy);
    Matrix dattn = matmul_transpose_b(dy, values);

    // softmax backward per row: ds = a * (dattn - sum(dattn * a))
    Matrix dscores(attn.rows(), attn.cols());
    for (std::size_t i = 0; i < attn.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < attn.cols(); ++j) dot += dattn(i, j) * attn(i, j);
        for (std::size_t j = 0; j < attn.cols(); ++j)
            dscores(i, j) = attn(i, j) * (dattn(i, j) - dot);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    for (double& v : dscores.data()) v *= scale;

    g.dq = matmul(dscores, keys);
    g.dk = matmul_transpose_a(dscores, queries);
    return g;
}

namespace {

Matrix rope_apply(const Matrix& x, const std::vector<std::int64_t>& positions, double base,
                  double sign) {
    if (x.cols() % 2 != 0) throw std::invalid_argument("rope: vector dimension must be even");
    if (positions.size() != x.rows()) throw std::invalid_argument("rope: one position per row");
    const std::size_t half = x.cols() / 2;
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double pos = static_cast<double>(positions[r]);
        for (std::size_t i = 0; i < half; ++i) {
            const double theta =
                std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(x.cols()));
            const double angle = sign * pos * theta;
            const double c = std::cos(angle), s = std::sin(angle);
            const double a = x(r, 2 * i), b = x(r, 2 * i + 1);
            y(r, 2 * i) = a * c - b * s;
            y(r, 2 * i + 1) = a * s + b * c;
        }
    }
    return y;
}

}  // namespace

Matrix rope_rotate(const Matrix& x, const std::vector<std::int64_t>& positions, double base) {
    return rope_apply(x, positions, base, 1.0);
}

Matrix rope_rotate_backward(const Matrix& dy, const std::vector<std::int64_t>& positions,
                            double base) {
    return rope_apply(dy, positions, base, -1.0);  // rotations are orthogonal
}

TripletResult triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                           const std::vector<double>& negative, double margin) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw std::invalid_argument("triplet_loss: dimension mismatch");
    if (margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be >= 0");

    double dp = 0.0, dn = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        const double ep = anchor[i] - positive[i];
        const double en = anchor[i] - negative[i];
        dp += ep * ep;
        dn += en * en;
    }
    TripletResult r;
    r.d_anchor.assign(anchor.size(), 0.0);
    r.d_positive.assign(anchor.size(), 0.0);
    r.d_negative.assign(anchor.size(), 0.0);
    const double hinge = dp - dn + margin;
    if (hinge <= 0.0) return r;
    r.loss = hinge;
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        r.d_anchor[i] = 2.0 * (negative[i] - positive[i]);
        r.d_positive[i] = -2.0 * (anchor[i] - positive[i]);
        r.d_negative[i] = 2.0 * (anchor[i] - negative[i]);
    }
    return r;
}

double time_mae(const AudioClip& est, const AudioClip& ref, AudioClip* grad_est) {
    if (est.num_channels() != ref.num_channels() || est.length() != ref.length())
        throw std::invalid_argument("time_mae: shape mismatch");
    const double n = static_cast<double>(est.length()) * est.num_channels();
    double acc = 0.0;
    std::vector<std::vector<double>> grads;
    if (grad_est) grads.assign(est.num_channels(), std::vector<double>(est.length(), 0.0));
    for (int c = 0; c < est.num_channels(); ++c) {
        const auto& e = est.channel(c);
        const auto& r = ref.channel(c);
        for (std::size_t i = 0; i < e.size(); ++i) {
            const double d = e[i] - r[i];
            acc += std::fabs(d);
            if (grad_est) grads[c][i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
        }
    }
    if (grad_est) *grad_est = AudioClip(std::move(grads), est.sample_rate_hz());
    return acc / n;
}

double multires_spec_mae(const AudioClip& est, const AudioClip& ref,
                         const std::vector<StftConfig>& configs, AudioClip* grad_est) {
    if (est.num_channels() != ref.num_channels() || est.length() != ref.length())
        throw std::invalid_argument("multires_spec_mae: shape mismatch");
    if (configs.empty()) throw std::invalid_argument("multires_spec_mae: no configs");

    std::vector<std::vector<double>> grads;
    if (grad_est) grads.assign(est.num_channels(), std::vector<double>(est.length(), 0.0));

    const double inv_cfgs = 1.0 / static_cast<double>(configs.size());
    double total = 0.0;
    for (const auto& cfg : configs) {
        if (cfg.centered)
            throw std::invalid_argument("multires_spec_mae: centered configs are not supported");
        if (est.length() < cfg.window_size)
            throw std::invalid_argument("multires_spec_mae: clip shorter than a config window");
        const std::size_t frames = (est.length() - cfg.window_size) / cfg.hop + 1;
        const std::size_t bins = cfg.window_size / 2 + 1;
        const double cells = static_cast<double>(frames * bins * est.num_channels());
        const double scale = inv_cfgs / cells;

        const auto window = hann_window(cfg.window_size);
        RealFft fft(cfg.window_size);
        std::vector<std::complex<double>> gframe(bins);
        std::vector<double> gtime(cfg.window_size);

        double cfg_acc = 0.0;
        for (int c = 0; c < est.num_channels(); ++c) {
            const Spectrogram se = stft(AudioClip({est.channel(c)}, est.sample_rate_hz()), cfg);
            const Spectrogram sr = stft(AudioClip({ref.channel(c)}, ref.sample_rate_hz()), cfg);
            for (std::size_t t = 0; t < se.frames; ++t) {
                for (std::size_t k = 0; k < se.bins; ++k) {
                    const auto d = se.at(t, k) - sr.at(t, k);
                    cfg_acc += std::fabs(d.real()) + std::fabs(d.imag());
                    if (grad_est) {
                        const double gr = d.real() > 0.0 ? scale : (d.real() < 0.0 ? -scale : 0.0);
                        const double gi = d.imag() > 0.0 ? scale : (d.imag() < 0.0 ? -scale : 0.0);
                        gframe[k] = {gr, gi};
                    }
                }
                if (grad_est) {
                    fft.adjoint(gframe.data(), gtime.data());
                    const std::size_t off = t * cfg.hop;
                    for (std::size_t i = 0; i < cfg.window_size; ++i)
                        grads[c][off + i] += gtime[i] * window[i];
                }
            }
        }
        total += cfg_acc / cells;
    }

    if (grad_est) *grad_est = AudioClip(std::move(grads), est.sample_rate_hz());
    return total * inv_cfgs;
}

GradCheckReport grad_check(const std::function<double(ParamStore&, bool)>& loss,
                           ParamStore& params, double step) {
    GradCheckReport report;
    report.step = step;

    const double base = loss(params, true);
    if (!std::isfinite(base)) throw std::runtime_error("grad_check: loss is not finite");

    // Snapshot analytic gradients before the probing evaluations disturb them.
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& [name, e] : params.entries()) analytic[name] = e.grad.data();

    for (auto& [name, e] : params.entries()) {
        double worst = 0.0;
        auto& w = e.value.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            const double up = loss(params, false);
            w[i] = saved - step;
            const double down = loss(params, false);
            w[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("grad_check: loss is not finite");
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[name][i];
            const double rel = std::fabs(a - numeric) /
                               std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
        report.max_rel_err[name] = worst;
    }
    return report;
}

}  // namespace ostr::nn
