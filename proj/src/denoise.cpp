#include "cbctcad/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "cbctcad/errors.hpp"
#include "cbctcad/io.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/parallel.hpp"
#include "cbctcad/rng.hpp"

namespace cbctcad {
namespace {

// Channel-major double tensor: index (c, y, x) = (c * h + y) * w + x.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
    double* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * h * w; }
    const double* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * h * w; }
};

// 3x3 same-padding convolution. Weights laid out (co, ci, ky, kx).
void conv3_forward(const Tensor& in, const double* w, const double* b, Tensor& out) {
    const int H = in.h, W = in.w;
    for (int co = 0; co < out.c; ++co) {
        double* op = out.plane(co);
        std::fill(op, op + static_cast<std::size_t>(H) * W, b[co]);
        for (int ci = 0; ci < in.c; ++ci) {
            const double* ip = in.plane(ci);
            const double* wk = w + ((static_cast<std::size_t>(co) * in.c + ci) * 9);
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const double wv = wk[ky * 3 + kx];
                    if (wv == 0.0) continue;
                    const int y0 = std::max(0, -dy), y1 = H - std::max(0, dy);
                    const int x0 = std::max(0, -dx), x1 = W - std::max(0, dx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = op + static_cast<std::size_t>(y) * W;
                        const double* irow = ip + static_cast<std::size_t>(y + dy) * W + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

// Gradients of conv3_forward: accumulates dW/db and writes d(in).
void conv3_backward(const Tensor& in, const double* w, const Tensor& dout, Tensor& din,
                    double* dw, double* db) {
    const int H = in.h, W = in.w;
    for (int co = 0; co < dout.c; ++co) {
        const double* gp = dout.plane(co);
        double acc_b = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) acc_b += gp[i];
        db[co] += acc_b;
        for (int ci = 0; ci < in.c; ++ci) {
            const double* ip = in.plane(ci);
            double* dip = din.plane(ci);
            const std::size_t wk = (static_cast<std::size_t>(co) * in.c + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = H - std::max(0, dy);
                    const int x0 = std::max(0, -dx), x1 = W - std::max(0, dx);
                    double acc_w = 0.0;
                    const double wv = w[wk + ky * 3 + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = gp + static_cast<std::size_t>(y) * W;
                        const double* irow = ip + static_cast<std::size_t>(y + dy) * W + dx;
                        double* drow = dip + static_cast<std::size_t>(y + dy) * W + dx;
                        for (int x = x0; x < x1; ++x) {
                            acc_w += grow[x] * irow[x];
                            drow[x] += wv * grow[x];
                        }
                    }
                    dw[wk + ky * 3 + kx] += acc_w;
                }
            }
        }
    }
}

void relu_forward(Tensor& t) {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
}

// Masks gradient by the post-activation sign (activation stored in act).
void relu_backward(const Tensor& act, Tensor& grad) {
    for (std::size_t i = 0; i < act.v.size(); ++i) {
        if (act.v[i] <= 0.0) grad.v[i] = 0.0;
    }
}

Tensor avgpool2_forward(const Tensor& in) {
    Tensor out(in.c, in.h / 2, in.w / 2);
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                const std::size_t i0 = static_cast<std::size_t>(2 * y) * in.w + 2 * x;
                op[static_cast<std::size_t>(y) * out.w + x] =
                    0.25 * (ip[i0] + ip[i0 + 1] + ip[i0 + in.w] + ip[i0 + in.w + 1]);
            }
        }
    }
    return out;
}

void avgpool2_backward(const Tensor& dout, Tensor& din) {
    for (int c = 0; c < dout.c; ++c) {
        const double* gp = dout.plane(c);
        double* dp = din.plane(c);
        for (int y = 0; y < dout.h; ++y) {
            for (int x = 0; x < dout.w; ++x) {
                const double g = 0.25 * gp[static_cast<std::size_t>(y) * dout.w + x];
                const std::size_t i0 = static_cast<std::size_t>(2 * y) * din.w + 2 * x;
                dp[i0] += g;
                dp[i0 + 1] += g;
                dp[i0 + din.w] += g;
                dp[i0 + din.w + 1] += g;
            }
        }
    }
}

Tensor upsample2_forward(const Tensor& in) {
    Tensor out(in.c, in.h * 2, in.w * 2);
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < out.h; ++y) {
            const double* irow = ip + static_cast<std::size_t>(y / 2) * in.w;
            double* orow = op + static_cast<std::size_t>(y) * out.w;
            for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
        }
    }
    return out;
}

void upsample2_backward(const Tensor& dout, Tensor& din) {
    for (int c = 0; c < dout.c; ++c) {
        const double* gp = dout.plane(c);
        double* dp = din.plane(c);
        for (int y = 0; y < dout.h; ++y) {
            const double* grow = gp + static_cast<std::size_t>(y) * dout.w;
            double* drow = dp + static_cast<std::size_t>(y / 2) * din.w;
            for (int x = 0; x < dout.w; ++x) drow[x / 2] += grow[x];
        }
    }
    return;
}

struct ParamView {
    // Offsets into the flat parameter vector.
    std::size_t w1, b1, w2, b2, w3, b3, w4, b4, total;
};

ParamView param_view(int c) {
    ParamView v{};
    const std::size_t c9 = static_cast<std::size_t>(c) * 9;
    v.w1 = 0;
    v.b1 = v.w1 + c9;                                   // 1 -> C
    v.w2 = v.b1 + c;
    v.b2 = v.w2 + static_cast<std::size_t>(c) * c9;     // C -> C
    v.w3 = v.b2 + c;
    v.b3 = v.w3 + 2 * static_cast<std::size_t>(c) * c9; // 2C -> C
    v.w4 = v.b3 + c;
    v.b4 = v.w4 + c9;                                   // C -> 1
    v.total = v.b4 + 1;
    return v;
}

struct ForwardState {
    Tensor x, a1, p, a2, u, cat, a3, r;
};

void forward_pass(const std::vector<double>& params, int C, const Image& noisy,
                  ForwardState& s) {
    const ParamView pv = param_view(C);
    const double* P = params.data();
    const int H = noisy.height, W = noisy.width;
    s.x = Tensor(1, H, W);
    for (std::size_t i = 0; i < noisy.data.size(); ++i) s.x.v[i] = noisy.data[i];

    s.a1 = Tensor(C, H, W);
    conv3_forward(s.x, P + pv.w1, P + pv.b1, s.a1);
    relu_forward(s.a1);
    s.p = avgpool2_forward(s.a1);
    s.a2 = Tensor(C, H / 2, W / 2);
    conv3_forward(s.p, P + pv.w2, P + pv.b2, s.a2);
    relu_forward(s.a2);
    s.u = upsample2_forward(s.a2);
    s.cat = Tensor(2 * C, H, W);
    std::copy(s.a1.v.begin(), s.a1.v.end(), s.cat.v.begin());
    std::copy(s.u.v.begin(), s.u.v.end(), s.cat.v.begin() + s.a1.v.size());
    s.a3 = Tensor(C, H, W);
    conv3_forward(s.cat, P + pv.w3, P + pv.b3, s.a3);
    relu_forward(s.a3);
    s.r = Tensor(1, H, W);
    conv3_forward(s.a3, P + pv.w4, P + pv.b4, s.r);
}

void check_slice_shape(const Image& img) {
    if (img.width < 4 || img.height < 4 || img.width % 2 != 0 || img.height % 2 != 0) {
        throw std::invalid_argument(
            "denoiser: slice dimensions must be even and >= 4 (got " +
            std::to_string(img.width) + "x" + std::to_string(img.height) + ")");
    }
}

}  // namespace

ConvDenoiser::ConvDenoiser(int channels) : channels_(channels) {
    if (channels < 1) throw std::invalid_argument("ConvDenoiser: channels must be >= 1");
    params_.assign(param_view(channels).total, 0.0);
}

void ConvDenoiser::init_weights(std::uint64_t seed) {
    Rng rng(seed);
    const ParamView pv = param_view(channels_);
    const auto fill = [&](std::size_t lo, std::size_t hi, int fan_in) {
        const double s = std::sqrt(1.0 / fan_in);
        for (std::size_t i = lo; i < hi; ++i) params_[i] = rng.uniform(-s, s);
    };
    fill(pv.w1, pv.b1, 9);
    fill(pv.w2, pv.b2, 9 * channels_);
    fill(pv.w3, pv.b3, 9 * 2 * channels_);
    fill(pv.w4, pv.b4, 9 * channels_);
    // Biases start at zero; the residual head keeps the initial map near
    // identity, which is the right prior for a denoiser.
    for (std::size_t i = pv.b1; i < pv.b1 + static_cast<std::size_t>(channels_); ++i)
        params_[i] = 0.0;
}

Image ConvDenoiser::apply(const Image& noisy) const {
    check_slice_shape(noisy);
    ForwardState s;
    forward_pass(params_, channels_, noisy, s);
    Image out(noisy.width, noisy.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>(s.x.v[i] + s.r.v[i]);
    }
    return out;
}

double ConvDenoiser::loss_and_gradient(const std::vector<Image>& noisy,
                                       const std::vector<Image>& clean,
                                       std::vector<double>& gradient) const {
    if (noisy.empty() || noisy.size() != clean.size()) {
        throw std::invalid_argument("loss_and_gradient: empty or mismatched batch");
    }
    const ParamView pv = param_view(channels_);
    gradient.assign(pv.total, 0.0);
    const double* P = params_.data();

    double loss = 0.0;
    const std::size_t batch = noisy.size();
    for (std::size_t s_idx = 0; s_idx < batch; ++s_idx) {
        const Image& in = noisy[s_idx];
        const Image& target = clean[s_idx];
        check_slice_shape(in);
        if (target.width != in.width || target.height != in.height) {
            throw std::invalid_argument("loss_and_gradient: noisy/clean shape mismatch");
        }
        ForwardState st;
        forward_pass(params_, channels_, in, st);

        const int H = in.height, W = in.width;
        const double inv = 1.0 / (static_cast<double>(batch) * H * W);
        Tensor dr(1, H, W);
        for (std::size_t i = 0; i < dr.v.size(); ++i) {
            const double diff = st.x.v[i] + st.r.v[i] - target.data[i];
            loss += diff * diff * inv;
            dr.v[i] = 2.0 * diff * inv;
        }

        double* G = gradient.data();
        Tensor da3(channels_, H, W);
        conv3_backward(st.a3, P + pv.w4, dr, da3, G + pv.w4, G + pv.b4);
        relu_backward(st.a3, da3);
        Tensor dcat(2 * channels_, H, W);
        conv3_backward(st.cat, P + pv.w3, da3, dcat, G + pv.w3, G + pv.b3);
        Tensor da1(channels_, H, W);
        std::copy(dcat.v.begin(), dcat.v.begin() + da1.v.size(), da1.v.begin());
        Tensor du(channels_, H, W);
        std::copy(dcat.v.begin() + da1.v.size(), dcat.v.end(), du.v.begin());
        Tensor da2(channels_, H / 2, W / 2);
        upsample2_backward(du, da2);
        relu_backward(st.a2, da2);
        Tensor dp(channels_, H / 2, W / 2);
        conv3_backward(st.p, P + pv.w2, da2, dp, G + pv.w2, G + pv.b2);
        Tensor da1_pool(channels_, H, W);
        avgpool2_backward(dp, da1_pool);
        for (std::size_t i = 0; i < da1.v.size(); ++i) da1.v[i] += da1_pool.v[i];
        relu_backward(st.a1, da1);
        Tensor dx(1, H, W);  // input gradient, discarded
        conv3_backward(st.x, P + pv.w1, da1, dx, G + pv.w1, G + pv.b1);
    }
    return loss;
}

DenoiserTrainingResult train_denoiser(const std::vector<TrainingPair>& pairs,
                                      const ConvDenoiserConfig& config) {
    if (pairs.empty()) throw std::invalid_argument("train_denoiser: empty training set");
    if (config.epochs < 1 || config.batch_size < 1) {
        throw std::invalid_argument("train_denoiser: epochs and batch_size must be >= 1");
    }
    if (!(config.learning_rate > 0.0)) {
        throw std::invalid_argument("train_denoiser: learning_rate must be > 0");
    }
    for (const auto& p : pairs) {
        check_slice_shape(p.noisy);
        if (p.clean.width != p.noisy.width || p.clean.height != p.noisy.height) {
            throw std::invalid_argument("train_denoiser: noisy/clean shape mismatch");
        }
    }

    DenoiserTrainingResult result;
    result.model = ConvDenoiser(config.channels);
    result.model.init_weights(config.seed);
    auto& params = result.model.parameters();
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;

    Rng rng = Rng(config.seed).fork("batching");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Image> batch_noisy, batch_clean;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Cosine learning-rate decay: late epochs refine fine structure
        // instead of bouncing around sharp minima.
        const double lr =
            config.learning_rate * 0.5 *
            (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(epoch) /
                            static_cast<double>(config.epochs)));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch_noisy.clear();
            batch_clean.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_noisy.push_back(pairs[order[i]].noisy);
                batch_clean.push_back(pairs[order[i]].clean);
            }
            const double loss = result.model.loss_and_gradient(batch_noisy, batch_clean, grad);
            if (!std::isfinite(loss)) {
                throw TrainingFailureError("denoiser training diverged at epoch " +
                                           std::to_string(epoch) + " (non-finite loss)");
            }
            epoch_loss += loss * static_cast<double>(end - start);
            seen += end - start;
            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.eps);
            }
        }
        result.history.push_back({epoch, epoch_loss / static_cast<double>(seen)});
    }
    return result;
}

Image tv_denoise(const Image& noisy, const TvConfig& config) {
    if (noisy.width < 2 || noisy.height < 2) {
        throw std::invalid_argument("tv_denoise: image must be at least 2x2");
    }
    if (config.weight < 0.0 || config.iterations < 0) {
        throw std::invalid_argument("tv_denoise: weight and iterations must be >= 0");
    }
    if (!(config.tau > 0.0) || config.tau > 0.125) {
        throw std::invalid_argument("tv_denoise: tau must be in (0, 0.125]");
    }
    if (config.weight == 0.0 || config.iterations == 0) return noisy;

    // Chambolle's dual projection for min ||x-f||^2 + weight * TV(x), i.e.
    // the ROF form (1/2)||x-f||^2 + theta * TV with theta = weight / 2.
    const int W = noisy.width, H = noisy.height;
    const double theta = config.weight / 2.0;
    std::vector<double> px(static_cast<std::size_t>(W) * H, 0.0);
    std::vector<double> py(px.size(), 0.0);
    std::vector<double> div(px.size(), 0.0);
    const auto idx = [W](int y, int x) { return static_cast<std::size_t>(y) * W + x; };

    for (int it = 0; it < config.iterations; ++it) {
        // div p with backward differences (adjoint of forward gradient).
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double d = 0.0;
                if (x < W - 1) d += px[idx(y, x)];
                if (x > 0) d -= px[idx(y, x - 1)];
                if (y < H - 1) d += py[idx(y, x)];
                if (y > 0) d -= py[idx(y - 1, x)];
                div[idx(y, x)] = d;
            }
        }
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double center = div[idx(y, x)] - noisy.at(y, x) / theta;
                const double gx =
                    x < W - 1 ? (div[idx(y, x + 1)] - noisy.at(y, x + 1) / theta) - center : 0.0;
                const double gy =
                    y < H - 1 ? (div[idx(y + 1, x)] - noisy.at(y + 1, x) / theta) - center : 0.0;
                const double mag = std::sqrt(gx * gx + gy * gy);
                const double denom = 1.0 + config.tau * mag;
                px[idx(y, x)] = (px[idx(y, x)] + config.tau * gx) / denom;
                py[idx(y, x)] = (py[idx(y, x)] + config.tau * gy) / denom;
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double d = 0.0;
            if (x < W - 1) d += px[idx(y, x)];
            if (x > 0) d -= px[idx(y, x - 1)];
            if (y < H - 1) d += py[idx(y, x)];
            if (y > 0) d -= py[idx(y - 1, x)];
            div[idx(y, x)] = d;
        }
    }
    Image out(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            out.at(y, x) = static_cast<float>(noisy.at(y, x) - theta * div[idx(y, x)]);
        }
    }
    return out;
}

DenoiserKind denoiser_kind_from_name(const std::string& name) {
    if (name == "identity") return DenoiserKind::Identity;
    if (name == "tv") return DenoiserKind::Tv;
    if (name == "learned") return DenoiserKind::Learned;
    throw std::invalid_argument("unknown denoiser kind: " + name);
}

const char* denoiser_kind_name(DenoiserKind k) {
    switch (k) {
        case DenoiserKind::Identity: return "identity";
        case DenoiserKind::Tv: return "tv";
        case DenoiserKind::Learned: return "learned";
    }
    return "unknown";
}

Denoiser Denoiser::identity() { return Denoiser{}; }

Denoiser Denoiser::make_tv(const TvConfig& config) {
    Denoiser d;
    d.kind = DenoiserKind::Tv;
    d.tv = config;
    return d;
}

Denoiser Denoiser::learned(ConvDenoiser net) {
    Denoiser d;
    d.kind = DenoiserKind::Learned;
    d.net = std::move(net);
    return d;
}

Image Denoiser::denoise_slice(const Image& slice) const {
    switch (kind) {
        case DenoiserKind::Identity: return slice;
        case DenoiserKind::Tv: return tv_denoise(slice, tv);
        case DenoiserKind::Learned: return net.apply(slice);
    }
    return slice;
}

Volume Denoiser::denoise_volume(const Volume& vol) const {
    Volume out = vol;
    if (kind == DenoiserKind::Identity) return out;
    parallel_for(static_cast<std::size_t>(vol.dims[1]), [&](std::size_t y) {
        const Image slice = coronal_slice(vol, static_cast<int>(y));
        set_coronal_slice(out, static_cast<int>(y), denoise_slice(slice));
    });
    return out;
}

void save_denoiser(const std::filesystem::path& path, const Denoiser& d) {
    ModelFile f;
    f.header["kind"] = "denoiser";
    f.header["algorithm"] = denoiser_kind_name(d.kind);
    switch (d.kind) {
        case DenoiserKind::Identity: break;
        case DenoiserKind::Tv:
            f.header["tv"] = {{"weight", d.tv.weight},
                              {"iterations", d.tv.iterations},
                              {"tau", d.tv.tau}};
            break;
        case DenoiserKind::Learned:
            f.header["channels"] = d.net.channels();
            f.params = d.net.parameters();
            break;
    }
    write_model(path, f);
}

Denoiser load_denoiser(const std::filesystem::path& path) {
    const ModelFile f = read_model(path);
    try {
        if (f.header.at("kind").get<std::string>() != "denoiser") {
            throw IoError("model file " + path.string() + ": not a denoiser");
        }
        const DenoiserKind kind =
            denoiser_kind_from_name(f.header.at("algorithm").get<std::string>());
        switch (kind) {
            case DenoiserKind::Identity: return Denoiser::identity();
            case DenoiserKind::Tv: {
                TvConfig tv;
                tv.weight = f.header.at("tv").at("weight").get<double>();
                tv.iterations = f.header.at("tv").at("iterations").get<int>();
                tv.tau = f.header.at("tv").at("tau").get<double>();
                return Denoiser::make_tv(tv);
            }
            case DenoiserKind::Learned: {
                ConvDenoiser net(f.header.at("channels").get<int>());
                if (f.params.size() != net.parameter_count()) {
                    throw IoError("model file " + path.string() + ": parameter count " +
                                  std::to_string(f.params.size()) + " does not match " +
                                  std::to_string(net.parameter_count()));
                }
                net.parameters() = f.params;
                return Denoiser::learned(std::move(net));
            }
        }
    } catch (const Json::exception& e) {
        throw IoError("model file " + path.string() + ": " + e.what());
    }
    throw IoError("model file " + path.string() + ": unreachable kind");
}

DenoiseQuality evaluate_denoiser(const Denoiser& d, const std::vector<TrainingPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("evaluate_denoiser: empty evaluation set");
    std::vector<double> psnrs, ssims;
    for (const auto& p : pairs) {
        const Image out = d.denoise_slice(p.noisy);
        const double ps = psnr(p.clean, out, 1.0);
        if (std::isfinite(ps)) psnrs.push_back(ps);
        ssims.push_back(ssim(p.clean, out));
    }
    const auto mean_sd = [](const std::vector<double>& xs) {
        if (xs.empty()) {
            return std::pair<double, double>(std::numeric_limits<double>::infinity(), 0.0);
        }
        double m = 0.0;
        for (const double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double var = 0.0;
        for (const double x : xs) var += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(var / static_cast<double>(xs.size())));
    };
    DenoiseQuality q;
    std::tie(q.psnr_mean, q.psnr_sd) = mean_sd(psnrs);
    std::tie(q.ssim_mean, q.ssim_sd) = mean_sd(ssims);
    q.n_slices = static_cast<int>(pairs.size());
    return q;
}

}  // namespace cbctcad
