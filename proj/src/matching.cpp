#include "ostr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ostr {

// ---------------------------------------------------------------------------
// PGM I/O and frame loading
// ---------------------------------------------------------------------------

void save_pgm(const std::string& path, std::size_t width, std::size_t height,
              const std::vector<unsigned char>& pixels) {
    if (pixels.size() != width * height) throw std::invalid_argument("save_pgm: pixel count mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

namespace {

int next_pgm_token(std::istream& in) {
    // Skips whitespace and '#' comment lines, returns the next integer.
    while (true) {
        const int c = in.peek();
        if (c == EOF) throw std::runtime_error("malformed PGM: unexpected end of header");
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value)) throw std::runtime_error("malformed PGM: bad header token");
    return value;
}

}  // namespace

std::vector<unsigned char> load_pgm(const std::string& path, std::size_t& width, std::size_t& height) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[2] = {};
    f.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') throw std::runtime_error(path + ": not a binary PGM");
    const int w = next_pgm_token(f);
    const int h = next_pgm_token(f);
    const int maxval = next_pgm_token(f);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error(path + ": unsupported PGM header");
    f.get();  // single whitespace after maxval

    std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h);
    f.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(pixels.size()))
        throw std::runtime_error(path + ": truncated PGM data");
    width = static_cast<std::size_t>(w);
    height = static_cast<std::size_t>(h);
    return pixels;
}

FrameSequence load_frames(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.size() < FrameSequence::kFrames)
        throw std::runtime_error(dir + ": needs at least 4 PGM frames, found " +
                                 std::to_string(files.size()));

    FrameSequence seq;
    for (std::size_t i = 0; i < FrameSequence::kFrames; ++i) {
        std::size_t w = 0, h = 0;
        const auto pixels = load_pgm(files[i].string(), w, h);
        if (w != FrameSequence::kSize || h != FrameSequence::kSize)
            throw std::runtime_error(files[i].string() + ": frame is not 224x224");
        seq.frames[i].resize(pixels.size());
        for (std::size_t p = 0; p < pixels.size(); ++p)
            seq.frames[i][p] = static_cast<double>(pixels[p]) / 255.0;
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Motion and rhythm features
// ---------------------------------------------------------------------------

MotionFeatures motion_features(const FrameSequence& frames) {
    constexpr std::size_t kSize = FrameSequence::kSize;
    constexpr std::size_t kBlock = MotionFeatures::kBlock;
    constexpr int kRadius = MotionFeatures::kSearchRadius;

    MotionFeatures mf;
    const std::size_t cells = MotionFeatures::kPairs * MotionFeatures::kGrid * MotionFeatures::kGrid;
    mf.dx.assign(cells, 0.0);
    mf.dy.assign(cells, 0.0);
    mf.residual.assign(cells, 0.0);

    for (std::size_t pair = 0; pair < MotionFeatures::kPairs; ++pair) {
        const auto& cur = frames.frames[pair];
        const auto& next = frames.frames[pair + 1];
        for (std::size_t by = 0; by < MotionFeatures::kGrid; ++by) {
            for (std::size_t bx = 0; bx < MotionFeatures::kGrid; ++bx) {
                const std::size_t x0 = bx * kBlock, y0 = by * kBlock;
                double best_sad = -1.0;
                int best_dx = 0, best_dy = 0;
                for (int dy = -kRadius; dy <= kRadius; ++dy) {
                    for (int dx = -kRadius; dx <= kRadius; ++dx) {
                        const auto sx = static_cast<std::ptrdiff_t>(x0) + dx;
                        const auto sy = static_cast<std::ptrdiff_t>(y0) + dy;
                        if (sx < 0 || sy < 0 || sx + kBlock > kSize || sy + kBlock > kSize) continue;
                        double sad = 0.0;
                        for (std::size_t r = 0; r < kBlock; ++r)
                            for (std::size_t c = 0; c < kBlock; ++c)
                                sad += std::fabs(cur[(y0 + r) * kSize + x0 + c] -
                                                 next[(sy + static_cast<std::ptrdiff_t>(r)) * kSize + sx +
                                                      static_cast<std::ptrdiff_t>(c)]);
                        const int mag2 = dx * dx + dy * dy;
                        const int best_mag2 = best_dx * best_dx + best_dy * best_dy;
                        if (best_sad < 0.0 || sad < best_sad ||
                            (sad == best_sad && mag2 < best_mag2)) {
                            best_sad = sad;
                            best_dx = dx;
                            best_dy = dy;
                        }
                    }
                }
                const std::size_t idx = mf.index(pair, by, bx);
                mf.dx[idx] = best_dx;
                mf.dy[idx] = best_dy;
                mf.residual[idx] = best_sad / static_cast<double>(kBlock * kBlock);
            }
        }
    }
    return mf;
}

std::vector<double> MotionFeatures::flatten() const {
    std::vector<double> out;
    out.reserve(dx.size() * 3);
    for (std::size_t i = 0; i < dx.size(); ++i) {
        out.push_back(dx[i] / kSearchRadius);
        out.push_back(dy[i] / kSearchRadius);
        out.push_back(residual[i]);
    }
    return out;
}

RhythmTokens rhythm_quantize(const std::vector<double>& envelope, int levels) {
    if (levels < 2) throw std::invalid_argument("rhythm_quantize: need at least 2 levels");
    RhythmTokens r;
    r.levels = levels;
    r.tokens.assign(envelope.size(), 0);
    double mx = 0.0;
    for (double v : envelope) mx = std::max(mx, v);
    if (mx <= 0.0) return r;  // silent envelope stays all-zero
    for (std::size_t i = 0; i < envelope.size(); ++i) {
        const int t = static_cast<int>(std::floor(envelope[i] / mx * levels));
        r.tokens[i] = std::clamp(t, 0, levels - 1);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Encoder features
// ---------------------------------------------------------------------------

VideoFeatures video_features(const FrameSequence& frames, const MotionFeatures& motion) {
    constexpr std::size_t kSize = FrameSequence::kSize;
    constexpr std::size_t kGrid = 14, kPatch = 16;

    VideoFeatures vf;
    vf.patches.reserve(FrameSequence::kFrames * kGrid * kGrid);
    for (const auto& frame : frames.frames) {
        for (std::size_t gy = 0; gy < kGrid; ++gy)
            for (std::size_t gx = 0; gx < kGrid; ++gx) {
                double acc = 0.0;
                for (std::size_t r = 0; r < kPatch; ++r)
                    for (std::size_t c = 0; c < kPatch; ++c)
                        acc += frame[(gy * kPatch + r) * kSize + gx * kPatch + c];
                vf.patches.push_back(acc / static_cast<double>(kPatch * kPatch));
            }
    }
    vf.motion = motion.flatten();
    return vf;
}

MusicFeatures music_features(const MelSpectrogram& mel, const RhythmTokens& rhythm,
                             const MatcherConfig& cfg) {
    MusicFeatures mf;
    const std::size_t chunks = cfg.chunks;
    if (mel.frames < chunks) throw std::invalid_argument("music_features: too few mel frames");

    mf.mel_chunks = nn::Matrix(chunks, kMelBands);
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t lo = c * mel.frames / chunks;
        const std::size_t hi = (c + 1) * mel.frames / chunks;
        for (std::size_t t = lo; t < hi; ++t)
            for (std::size_t m = 0; m < kMelBands; ++m) mf.mel_chunks(c, m) += mel.at(t, m);
        for (std::size_t m = 0; m < kMelBands; ++m)
            mf.mel_chunks(c, m) /= static_cast<double>(hi - lo);
    }

    mf.rhythm_hist = nn::Matrix(chunks, cfg.rhythm_levels);
    const std::size_t n = rhythm.tokens.size();
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t lo = c * n / chunks;
        const std::size_t hi = (c + 1) * n / chunks;
        if (hi == lo) continue;
        for (std::size_t i = lo; i < hi; ++i) mf.rhythm_hist(c, rhythm.tokens[i]) += 1.0;
        for (int l = 0; l < cfg.rhythm_levels; ++l)
            mf.rhythm_hist(c, l) /= static_cast<double>(hi - lo);
    }
    return mf;
}

// ---------------------------------------------------------------------------
// Matcher model
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kPatchDim = FrameSequence::kFrames * 14 * 14;  // 784
constexpr std::size_t kMotionDim = MotionFeatures::kPairs * 14 * 14 * 3;  // 1764

std::vector<double> normalized(const nn::Matrix& e, double& norm_out) {
    double n2 = 0.0;
    for (double v : e.data()) n2 += v * v;
    norm_out = std::sqrt(n2);
    std::vector<double> out(e.data());
    if (norm_out < 1e-12) {  // degenerate input; fixed unit vector keeps determinism
        std::fill(out.begin(), out.end(), 0.0);
        out[0] = 1.0;
        return out;
    }
    for (double& v : out) v /= norm_out;
    return out;
}

// d e = (demb - emb (demb . emb)) / |e|
nn::Matrix normalize_backward(const std::vector<double>& emb, double norm,
                              const std::vector<double>& demb) {
    nn::Matrix de(1, emb.size());
    if (norm < 1e-12) return de;
    double dot = 0.0;
    for (std::size_t i = 0; i < emb.size(); ++i) dot += demb[i] * emb[i];
    for (std::size_t i = 0; i < emb.size(); ++i) de(0, i) = (demb[i] - emb[i] * dot) / norm;
    return de;
}

struct VideoCache {
    nn::Matrix f, mo, cat, u, e;
    double e_norm = 0.0;
    std::vector<double> emb;
};

std::vector<double> video_forward(const nn::ParamStore& p, const VideoFeatures& vf,
                                  VideoCache* cache) {
    nn::Matrix f(1, kPatchDim, std::vector<double>(vf.patches));
    nn::Matrix mo(1, kMotionDim, std::vector<double>(vf.motion));
    const nn::Matrix x1 = nn::matmul(f, p.value("video/patch_w"));
    const nn::Matrix x2 = nn::matmul(mo, p.value("video/motion_w"));

    nn::Matrix cat(1, x1.cols() + x2.cols());
    for (std::size_t j = 0; j < x1.cols(); ++j) cat(0, j) = x1(0, j);
    for (std::size_t j = 0; j < x2.cols(); ++j) cat(0, x1.cols() + j) = x2(0, j);

    nn::Matrix u = nn::linear(cat, p.value("video/hidden_w"), p.value("video/hidden_b"));
    for (double& v : u.data()) v = std::tanh(v);
    const nn::Matrix e = nn::linear(u, p.value("video/out_w"), p.value("video/out_b"));

    double norm = 0.0;
    auto emb = normalized(e, norm);
    if (cache) {
        cache->f = std::move(f);
        cache->mo = std::move(mo);
        cache->cat = std::move(cat);
        cache->u = std::move(u);
        cache->e = e;
        cache->e_norm = norm;
        cache->emb = emb;
    }
    return emb;
}

void video_backward(nn::ParamStore& p, const VideoCache& cache, const std::vector<double>& demb) {
    const nn::Matrix de = normalize_backward(cache.emb, cache.e_norm, demb);
    auto go = nn::linear_backward(cache.u, p.value("video/out_w"), de);

    nn::Matrix dh = go.dx;
    for (std::size_t j = 0; j < dh.cols(); ++j)
        dh(0, j) *= 1.0 - cache.u(0, j) * cache.u(0, j);
    auto gh = nn::linear_backward(cache.cat, p.value("video/hidden_w"), dh);

    const std::size_t d = go.db.cols();
    nn::Matrix dx1(1, d), dx2(1, d);
    for (std::size_t j = 0; j < d; ++j) {
        dx1(0, j) = gh.dx(0, j);
        dx2(0, j) = gh.dx(0, d + j);
    }

    auto accumulate = [&p](const char* name, const nn::Matrix& g) {
        auto& dst = p.grad(name);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i];
    };
    accumulate("video/out_w", go.dw);
    accumulate("video/out_b", go.db);
    accumulate("video/hidden_w", gh.dw);
    accumulate("video/hidden_b", gh.db);
    accumulate("video/patch_w", nn::matmul_transpose_a(cache.f, dx1));
    accumulate("video/motion_w", nn::matmul_transpose_a(cache.mo, dx2));
}

struct MusicCache {
    nn::Matrix k_proj, v_proj, q, qr, kr, attn_out, g, u, e;
    nn::AttentionCache attn;
    std::vector<std::int64_t> positions;
    double e_norm = 0.0;
    std::vector<double> emb;
};

std::vector<double> music_forward(const nn::ParamStore& p, const MusicFeatures& mf,
                                  MusicCache* cache) {
    const std::size_t chunks = mf.mel_chunks.rows();
    std::vector<std::int64_t> positions(chunks);
    for (std::size_t i = 0; i < chunks; ++i) positions[i] = static_cast<std::int64_t>(i);

    nn::Matrix k_proj = nn::matmul(mf.mel_chunks, p.value("music/attn_key_w"));
    nn::Matrix v_proj = nn::matmul(mf.mel_chunks, p.value("music/attn_value_w"));
    nn::Matrix q = nn::matmul(mf.rhythm_hist, p.value("music/rhythm_embed"));

    nn::Matrix qr = nn::rope_rotate(q, positions);
    nn::Matrix kr = nn::rope_rotate(k_proj, positions);

    nn::AttentionCache attn;
    nn::Matrix attn_out = nn::cross_attention(qr, kr, v_proj, &attn);

    nn::Matrix g(1, attn_out.cols());
    for (std::size_t i = 0; i < attn_out.rows(); ++i)
        for (std::size_t j = 0; j < attn_out.cols(); ++j) g(0, j) += attn_out(i, j);
    for (double& v : g.data()) v /= static_cast<double>(attn_out.rows());

    nn::Matrix u = nn::linear(g, p.value("music/hidden_w"), p.value("music/hidden_b"));
    for (double& v : u.data()) v = std::tanh(v);
    const nn::Matrix e = nn::linear(u, p.value("music/out_w"), p.value("music/out_b"));

    double norm = 0.0;
    auto emb = normalized(e, norm);
    if (cache) {
        cache->k_proj = std::move(k_proj);
        cache->v_proj = std::move(v_proj);
        cache->q = std::move(q);
        cache->qr = std::move(qr);
        cache->kr = std::move(kr);
        cache->attn_out = std::move(attn_out);
        cache->attn = std::move(attn);
        cache->positions = std::move(positions);
        cache->g = std::move(g);
        cache->u = std::move(u);
        cache->e = e;
        cache->e_norm = norm;
        cache->emb = emb;
    }
    return emb;
}

void music_backward(nn::ParamStore& p, const MusicFeatures& mf, const MusicCache& cache,
                    const std::vector<double>& demb) {
    const nn::Matrix de = normalize_backward(cache.emb, cache.e_norm, demb);
    auto go = nn::linear_backward(cache.u, p.value("music/out_w"), de);

    nn::Matrix dh = go.dx;
    for (std::size_t j = 0; j < dh.cols(); ++j)
        dh(0, j) *= 1.0 - cache.u(0, j) * cache.u(0, j);
    auto gh = nn::linear_backward(cache.g, p.value("music/hidden_w"), dh);

    const std::size_t chunks = cache.attn_out.rows();
    nn::Matrix dattn_out(chunks, cache.attn_out.cols());
    for (std::size_t i = 0; i < chunks; ++i)
        for (std::size_t j = 0; j < dattn_out.cols(); ++j)
            dattn_out(i, j) = gh.dx(0, j) / static_cast<double>(chunks);

    auto ga = nn::cross_attention_backward(cache.qr, cache.kr, cache.v_proj, cache.attn, dattn_out);
    const nn::Matrix dq = nn::rope_rotate_backward(ga.dq, cache.positions);
    const nn::Matrix dk = nn::rope_rotate_backward(ga.dk, cache.positions);

    auto accumulate = [&p](const char* name, const nn::Matrix& g) {
        auto& dst = p.grad(name);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i];
    };
    accumulate("music/out_w", go.dw);
    accumulate("music/out_b", go.db);
    accumulate("music/hidden_w", gh.dw);
    accumulate("music/hidden_b", gh.db);
    accumulate("music/rhythm_embed", nn::matmul_transpose_a(nn::Matrix(mf.rhythm_hist), dq));
    accumulate("music/attn_key_w", nn::matmul_transpose_a(nn::Matrix(mf.mel_chunks), dk));
    accumulate("music/attn_value_w", nn::matmul_transpose_a(nn::Matrix(mf.mel_chunks), ga.dv));
}

}  // namespace

MatcherModel::MatcherModel(const MatcherConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.embed_dim % 2 != 0)
        throw std::invalid_argument("embed_dim must be even for rotary positions");
    const std::size_t d = cfg_.embed_dim;
    Rng rng(init_seed);
    params_.add("music/attn_key_w", nn::Matrix::randn(kMelBands, d, rng, 0.1));
    params_.add("music/attn_value_w", nn::Matrix::randn(kMelBands, d, rng, 0.1));
    params_.add("music/rhythm_embed",
                nn::Matrix::randn(static_cast<std::size_t>(cfg_.rhythm_levels), d, rng, 0.1));
    params_.add("music/hidden_w", nn::Matrix::randn(d, d, rng, 0.2));
    params_.add("music/hidden_b", nn::Matrix(1, d));
    params_.add("music/out_w", nn::Matrix::randn(d, d, rng, 0.2));
    params_.add("music/out_b", nn::Matrix(1, d));
    params_.add("video/patch_w", nn::Matrix::randn(kPatchDim, d, rng, 0.05));
    params_.add("video/motion_w", nn::Matrix::randn(kMotionDim, d, rng, 0.05));
    params_.add("video/hidden_w", nn::Matrix::randn(2 * d, d, rng, 0.2));
    params_.add("video/hidden_b", nn::Matrix(1, d));
    params_.add("video/out_w", nn::Matrix::randn(d, d, rng, 0.2));
    params_.add("video/out_b", nn::Matrix(1, d));
}

std::vector<double> MatcherModel::embed_video(const FrameSequence& frames,
                                              const MotionFeatures& motion) const {
    return video_forward(params_, video_features(frames, motion), nullptr);
}

std::vector<double> MatcherModel::embed_music(const MelSpectrogram& mel,
                                              const RhythmTokens& rhythm) const {
    return music_forward(params_, music_features(mel, rhythm, cfg_), nullptr);
}

void MatcherModel::save(const std::string& path) const {
    nn::ParamStore store;
    for (const auto& [name, e] : params_.entries()) store.add(name, e.value);
    nn::Matrix meta(1, 4);
    meta(0, 0) = static_cast<double>(cfg_.embed_dim);
    meta(0, 1) = cfg_.margin;
    meta(0, 2) = static_cast<double>(cfg_.rhythm_levels);
    meta(0, 3) = static_cast<double>(cfg_.chunks);
    store.add("meta/config", std::move(meta));
    store.save(path);
}

MatcherModel MatcherModel::load(const std::string& path) {
    nn::ParamStore store = nn::ParamStore::load(path);
    MatcherModel model;
    const auto& meta = store.value("meta/config");
    model.cfg_.embed_dim = static_cast<std::size_t>(meta(0, 0));
    model.cfg_.margin = meta(0, 1);
    model.cfg_.rhythm_levels = static_cast<int>(meta(0, 2));
    model.cfg_.chunks = static_cast<std::size_t>(meta(0, 3));
    for (const auto& [name, e] : store.entries())
        if (!name.starts_with("meta/")) model.params_.add(name, e.value);
    return model;
}

double video_probe_loss(MatcherModel& model, const VideoFeatures& features,
                        const std::vector<double>& probe, bool with_grad) {
    VideoCache cache;
    const auto emb = video_forward(model.params(), features, &cache);
    double loss = 0.0;
    for (std::size_t i = 0; i < emb.size(); ++i) loss += emb[i] * probe[i];
    if (with_grad) video_backward(model.params(), cache, probe);
    return loss;
}

double music_probe_loss(MatcherModel& model, const MusicFeatures& features,
                        const std::vector<double>& probe, bool with_grad) {
    MusicCache cache;
    const auto emb = music_forward(model.params(), features, &cache);
    double loss = 0.0;
    for (std::size_t i = 0; i < emb.size(); ++i) loss += emb[i] * probe[i];
    if (with_grad) music_backward(model.params(), features, cache, probe);
    return loss;
}

double matcher_triplet_loss(MatcherModel& model, const VideoFeatures& video,
                            const MusicFeatures& positive, const MusicFeatures& negative,
                            bool with_grad) {
    VideoCache vc;
    MusicCache pc, nc;
    const auto ev = video_forward(model.params(), video, &vc);
    const auto ep = music_forward(model.params(), positive, &pc);
    const auto en = music_forward(model.params(), negative, &nc);

    const auto tl = nn::triplet_loss(ev, ep, en, model.config().margin);
    if (with_grad && tl.loss > 0.0) {
        video_backward(model.params(), vc, tl.d_anchor);
        music_backward(model.params(), positive, pc, tl.d_positive);
        music_backward(model.params(), negative, nc, tl.d_negative);
    }
    return tl.loss;
}

MatcherTrainResult train_matcher(const MixManifest& manifest, const std::string& root,
                                 const MatcherConfig& cfg, std::uint64_t seed) {
    const auto train = manifest.split_entries("train");
    if (train.empty()) throw std::runtime_error("train split is empty");

    struct Example {
        VideoFeatures video;
        MusicFeatures positive, negative;
    };
    std::vector<Example> examples;
    examples.reserve(train.size());
    for (const auto& e : train) {
        if (e.frames_dir.empty())
            throw std::runtime_error("matcher training needs frame directories (overlay manifest)");
        const FrameSequence frames = load_frames((fs::path(root) / e.frames_dir).string());
        const MotionFeatures motion = motion_features(frames);
        const AudioClip ost = to_mono(load_wav((fs::path(root) / e.ost_ref_path).string()));
        const AudioClip bgm = to_mono(load_wav((fs::path(root) / e.bgm_ref_path).string()));

        Example ex;
        ex.video = video_features(frames, motion);
        ex.positive = music_features(mel_spectrogram(ost),
                                     rhythm_quantize(onset_envelope(ost), cfg.rhythm_levels), cfg);
        ex.negative = music_features(mel_spectrogram(bgm),
                                     rhythm_quantize(onset_envelope(bgm), cfg.rhythm_levels), cfg);
        examples.push_back(std::move(ex));
    }

    MatcherModel model(cfg, seed);
    auto frozen_loss = [&]() {
        double acc = 0.0;
        for (const auto& ex : examples)
            acc += matcher_triplet_loss(model, ex.video, ex.positive, ex.negative, false);
        return acc / static_cast<double>(examples.size());
    };

    MatcherTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        result.epoch_loss.push_back(frozen_loss());
        for (const auto& ex : examples) {
            model.params().zero_grads();
            const double loss = matcher_triplet_loss(model, ex.video, ex.positive, ex.negative, true);
            if (!std::isfinite(loss)) throw std::runtime_error("matcher loss is not finite");
            nn::adam_step(model.params(), cfg.lr);
        }
    }
    result.epoch_loss.push_back(frozen_loss());
    result.model = std::move(model);
    return result;
}

MatchResult match(const FrameSequence& frames, const MotionFeatures& motion,
                  const AudioClip& audio_a, const AudioClip& audio_b, const MatcherModel& model) {
    const auto ev = model.embed_video(frames, motion);

    auto embed = [&model](const AudioClip& clip) {
        const AudioClip mono = to_mono(clip);
        return model.embed_music(
            mel_spectrogram(mono),
            rhythm_quantize(onset_envelope(mono), model.config().rhythm_levels));
    };
    const auto ea = embed(audio_a);
    const auto eb = embed(audio_b);

    auto sq_dist = [](const std::vector<double>& x, const std::vector<double>& y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
        return acc;
    };

    MatchResult r;
    r.distance_a = sq_dist(ev, ea);
    r.distance_b = sq_dist(ev, eb);
    r.tie = r.distance_a == r.distance_b;
    r.choice = (r.distance_a <= r.distance_b) ? MatchResult::Choice::A : MatchResult::Choice::B;
    return r;
}

double matching_accuracy(const MatcherModel& model, const std::vector<MatchCase>& cases) {
    if (cases.empty()) throw std::invalid_argument("matching_accuracy: empty test set");
    std::size_t correct = 0;
    for (const auto& c : cases) {
        const auto r = match(c.frames, c.motion, c.ost, c.bgm, model);
        if (r.choice == MatchResult::Choice::A) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(cases.size());
}

}  // namespace ostr
