#include "cbctcad/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cbctcad/errors.hpp"
#include "cbctcad/io.hpp"

namespace cbctcad {
namespace {

void histogram16(const float* data, std::size_t n, std::vector<double>& out) {
    std::array<std::int64_t, 16> bins{};
    for (std::size_t i = 0; i < n; ++i) {
        int b = static_cast<int>(data[i] * 16.0f);
        b = std::clamp(b, 0, 15);
        ++bins[b];
    }
    for (const std::int64_t b : bins) {
        out.push_back(static_cast<double>(b) / static_cast<double>(n));
    }
}

// Canonical sample ordering: lexicographic by feature vector, then label.
// Training then visits samples in a reproducible order regardless of how the
// caller assembled them, making results invariant to input permutation.
void canonical_sort(std::vector<std::vector<double>>& features, std::vector<int>& labels) {
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (features[a] != features[b]) return features[a] < features[b];
        return labels[a] < labels[b];
    });
    std::vector<std::vector<double>> f2(features.size());
    std::vector<int> l2(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        f2[i] = std::move(features[order[i]]);
        l2[i] = labels[order[i]];
    }
    features = std::move(f2);
    labels = std::move(l2);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::vector<double> slice_features(const Image& slice) {
    if (slice.width < 3 || slice.height < 3) {
        throw std::invalid_argument("slice_features: slice must be at least 3x3");
    }
    const std::size_t n = slice.data.size();
    std::vector<double> f;
    f.reserve(kSliceFeatureCount);
    histogram16(slice.data.data(), n, f);
    double mean = 0.0;
    for (const float v : slice.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    std::size_t low = 0;
    for (const float v : slice.data) {
        var += (v - mean) * (v - mean);
        if (v < 0.1f) ++low;
    }
    var /= static_cast<double>(n);
    f.push_back(mean);
    f.push_back(var);
    f.push_back(static_cast<double>(low) / static_cast<double>(n));
    double grad = 0.0;
    std::int64_t count = 0;
    for (int y = 1; y < slice.height - 1; ++y) {
        for (int x = 1; x < slice.width - 1; ++x) {
            const double gx = (slice.at(y, x + 1) - slice.at(y, x - 1)) / 2.0;
            const double gy = (slice.at(y + 1, x) - slice.at(y - 1, x)) / 2.0;
            grad += std::sqrt(gx * gx + gy * gy);
            ++count;
        }
    }
    f.push_back(grad / static_cast<double>(count));
    return f;
}

std::vector<double> side_features(const Volume& side_volume, double high_threshold) {
    const int nx = side_volume.dims[0], ny = side_volume.dims[1], nz = side_volume.dims[2];
    if (nx < 2 || ny < 1 || nz < 2) {
        throw std::invalid_argument("side_features: side volume too small");
    }
    const double cx = 0.5 * (kSinusBoxX0 + kSinusBoxX1) * nx;
    const double cy = 0.5 * (kSinusBoxY0 + kSinusBoxY1) * ny;
    const double cz = 0.5 * (kSinusBoxZ0 + kSinusBoxZ1) * nz;
    const double rx = std::max(0.5, 0.5 * (kSinusBoxX1 - kSinusBoxX0) * nx);
    const double ry = std::max(0.5, 0.5 * (kSinusBoxY1 - kSinusBoxY0) * ny);
    const double rz = std::max(0.5, 0.5 * (kSinusBoxZ1 - kSinusBoxZ0) * nz);

    std::vector<float> region;
    for (int z = 0; z < nz; ++z) {
        const double uz = (z - cz) / rz;
        if (std::abs(uz) > 1.0) continue;
        for (int y = 0; y < ny; ++y) {
            const double uy = (y - cy) / ry;
            for (int x = 0; x < nx; ++x) {
                const double ux = (x - cx) / rx;
                if (ux * ux + uy * uy + uz * uz <= 1.0) {
                    region.push_back(side_volume.at(x, y, z));
                }
            }
        }
    }
    if (region.empty()) {
        region.push_back(side_volume.at(static_cast<int>(cx), static_cast<int>(cy),
                                        static_cast<int>(cz)));
    }
    const std::size_t n = region.size();
    double mean = 0.0;
    for (const float v : region) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0, mx = -1e30;
    std::size_t high = 0;
    for (const float v : region) {
        var += (v - mean) * (v - mean);
        mx = std::max(mx, static_cast<double>(v));
        if (v > high_threshold) ++high;
    }
    var /= static_cast<double>(n);

    std::vector<double> f;
    f.reserve(kSideFeatureCount);
    f.push_back(mean);
    f.push_back(var);
    f.push_back(mx);
    f.push_back(static_cast<double>(high) / static_cast<double>(n));
    histogram16(region.data(), n, f);
    return f;
}

void StandardScaler::fit(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) throw std::invalid_argument("StandardScaler: no samples");
    const std::size_t dim = samples.front().size();
    mean.assign(dim, 0.0);
    sd.assign(dim, 0.0);
    for (const auto& s : samples) {
        if (s.size() != dim) throw std::invalid_argument("StandardScaler: ragged samples");
        for (std::size_t j = 0; j < dim; ++j) mean[j] += s[j];
    }
    for (double& m : mean) m /= static_cast<double>(samples.size());
    for (const auto& s : samples) {
        for (std::size_t j = 0; j < dim; ++j) {
            sd[j] += (s[j] - mean[j]) * (s[j] - mean[j]);
        }
    }
    for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(samples.size())), 1e-8);
}

std::vector<double> StandardScaler::transform(const std::vector<double>& x) const {
    if (x.size() != mean.size()) {
        throw std::invalid_argument("StandardScaler: dimension mismatch");
    }
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / sd[j];
    return z;
}

double softmax_loss_and_gradient(const std::vector<std::vector<double>>& features,
                                 const std::vector<int>& labels, int n_classes,
                                 const std::vector<double>& params, double l2,
                                 std::vector<double>& gradient) {
    if (features.empty() || features.size() != labels.size()) {
        throw std::invalid_argument("softmax_loss: empty or mismatched inputs");
    }
    const std::size_t dim = features.front().size();
    const std::size_t expected = static_cast<std::size_t>(n_classes) * dim + n_classes;
    if (params.size() != expected) {
        throw std::invalid_argument("softmax_loss: parameter vector size mismatch");
    }
    gradient.assign(expected, 0.0);
    const double* W = params.data();                 // n_classes x dim, row-major
    const double* b = params.data() + n_classes * dim;
    double* gW = gradient.data();
    double* gb = gradient.data() + n_classes * dim;

    const double inv_n = 1.0 / static_cast<double>(features.size());
    double loss = 0.0;
    std::vector<double> logits(n_classes), p(n_classes);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& x = features[i];
        const int y = labels[i];
        if (y < 0 || y >= n_classes) throw std::invalid_argument("softmax_loss: bad label");
        double zmax = -1e300;
        for (int k = 0; k < n_classes; ++k) {
            double z = b[k];
            const double* wk = W + static_cast<std::size_t>(k) * dim;
            for (std::size_t j = 0; j < dim; ++j) z += wk[j] * x[j];
            logits[k] = z;
            zmax = std::max(zmax, z);
        }
        double denom = 0.0;
        for (int k = 0; k < n_classes; ++k) {
            p[k] = std::exp(logits[k] - zmax);
            denom += p[k];
        }
        for (int k = 0; k < n_classes; ++k) p[k] /= denom;
        loss -= std::log(std::max(p[y], 1e-300)) * inv_n;
        for (int k = 0; k < n_classes; ++k) {
            const double delta = (p[k] - (k == y ? 1.0 : 0.0)) * inv_n;
            double* gk = gW + static_cast<std::size_t>(k) * dim;
            for (std::size_t j = 0; j < dim; ++j) gk[j] += delta * x[j];
            gb[k] += delta;
        }
    }
    // L2 on the weights only.
    for (std::size_t j = 0; j < static_cast<std::size_t>(n_classes) * dim; ++j) {
        loss += 0.5 * l2 * W[j] * W[j];
        gW[j] += l2 * W[j];
    }
    return loss;
}

namespace {

// Full-batch gradient descent on the softmax objective; returns the flat
// parameter vector. Throws TrainingFailureError if the loss goes non-finite
// or fails to improve from start to finish.
std::vector<double> fit_softmax(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& labels, int n_classes,
                                const GdConfig& gd) {
    const std::size_t dim = features.front().size();
    std::vector<double> params(static_cast<std::size_t>(n_classes) * dim + n_classes, 0.0);
    std::vector<double> grad;
    double first_loss = 0.0, last_loss = 0.0;
    for (int it = 0; it < gd.iterations; ++it) {
        const double loss =
            softmax_loss_and_gradient(features, labels, n_classes, params, gd.l2, grad);
        if (!std::isfinite(loss)) {
            throw TrainingFailureError("classifier training diverged at iteration " +
                                       std::to_string(it));
        }
        if (it == 0) first_loss = loss;
        last_loss = loss;
        for (std::size_t j = 0; j < params.size(); ++j) {
            params[j] -= gd.learning_rate * grad[j];
        }
    }
    if (gd.iterations > 1 && last_loss > first_loss) {
        throw TrainingFailureError("classifier training failed to reduce the loss (" +
                                   std::to_string(first_loss) + " -> " +
                                   std::to_string(last_loss) + ")");
    }
    return params;
}

}  // namespace

KeySliceSelector::KeySliceSelector(StandardScaler scaler, std::vector<double> weights,
                                   double bias, double threshold)
    : scaler_(std::move(scaler)), weights_(std::move(weights)), bias_(bias),
      threshold_(threshold) {}

double KeySliceSelector::slice_probability(const Image& slice) const {
    if (weights_.empty()) throw std::invalid_argument("selector: model is untrained");
    const std::vector<double> z = scaler_.transform(slice_features(slice));
    double s = bias_;
    for (std::size_t j = 0; j < z.size(); ++j) s += weights_[j] * z[j];
    return sigmoid(s);
}

std::vector<double> KeySliceSelector::probabilities(const Volume& vol) const {
    std::vector<double> p(vol.dims[1]);
    for (int y = 0; y < vol.dims[1]; ++y) {
        p[y] = slice_probability(coronal_slice(vol, y));
    }
    return p;
}

std::array<int, 2> KeySliceSelector::select(const Volume& vol) const {
    const std::vector<double> p = probabilities(vol);
    int best_start = -1, best_len = 0;
    double best_mean = -1.0;
    int run_start = -1;
    double run_sum = 0.0;
    const auto close_run = [&](int end_exclusive) {
        if (run_start < 0) return;
        const int len = end_exclusive - run_start;
        const double mean = run_sum / len;
        if (len > best_len || (len == best_len && mean > best_mean)) {
            best_len = len;
            best_start = run_start;
            best_mean = mean;
        }
        run_start = -1;
        run_sum = 0.0;
    };
    for (int y = 0; y < static_cast<int>(p.size()); ++y) {
        if (p[y] >= threshold_) {
            if (run_start < 0) run_start = y;
            run_sum += p[y];
        } else {
            close_run(y);
        }
    }
    close_run(static_cast<int>(p.size()));
    if (best_start < 0) {
        throw NoSinusFoundError("key-slice selector found no positive slices (max p=" +
                                std::to_string(*std::max_element(p.begin(), p.end())) + ")");
    }
    return {best_start, best_start + best_len - 1};
}

KeySliceSelector train_key_slice_selector(const std::vector<SelectorCase>& cases,
                                          const SelectorTrainConfig& config) {
    if (cases.empty()) throw std::invalid_argument("train_selector: no cases");
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& c : cases) {
        if (c.volume == nullptr) throw std::invalid_argument("train_selector: null volume");
        const auto& vol = *c.volume;
        if (c.key_range[0] < 0 || c.key_range[1] >= vol.dims[1] ||
            c.key_range[0] > c.key_range[1]) {
            throw std::invalid_argument("train_selector: bad key range");
        }
        for (int y = 0; y < vol.dims[1]; ++y) {
            feats.push_back(slice_features(coronal_slice(vol, y)));
            labels.push_back(y >= c.key_range[0] && y <= c.key_range[1] ? 1 : 0);
        }
    }
    const std::int64_t pos = std::accumulate(labels.begin(), labels.end(), std::int64_t{0});
    if (pos == 0 || pos == static_cast<std::int64_t>(labels.size())) {
        throw TrainingFailureError("selector training needs both positive and negative slices");
    }

    canonical_sort(feats, labels);
    StandardScaler scaler;
    scaler.fit(feats);
    std::vector<std::vector<double>> z(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) z[i] = scaler.transform(feats[i]);

    // Two-class softmax == logistic regression; weight vector is the
    // difference of the class rows.
    const std::vector<double> params = fit_softmax(z, labels, 2, config.gd);
    const std::size_t dim = feats.front().size();
    std::vector<double> w(dim);
    for (std::size_t j = 0; j < dim; ++j) w[j] = params[dim + j] - params[j];
    const double bias = params[2 * dim + 1] - params[2 * dim];

    // F1-maximizing threshold over the training probabilities: candidates
    // are midpoints between adjacent distinct scores plus the extremes.
    std::vector<double> probs(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        double s = bias;
        for (std::size_t j = 0; j < dim; ++j) s += w[j] * z[i][j];
        probs[i] = sigmoid(s);
    }
    std::vector<double> sorted = probs;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> candidates{0.5};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        candidates.push_back((sorted[i] + sorted[i + 1]) / 2.0);
    }
    double best_f1 = -1.0, best_thresh = 0.5;
    for (const double t : candidates) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const bool pred = probs[i] >= t;
            if (pred && labels[i] == 1) ++tp;
            else if (pred && labels[i] == 0) ++fp;
            else if (!pred && labels[i] == 1) ++fn;
        }
        const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        const double f1 =
            precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        if (f1 > best_f1 + 1e-12 || (std::abs(f1 - best_f1) <= 1e-12 && t < best_thresh)) {
            best_f1 = f1;
            best_thresh = t;
        }
    }
    return KeySliceSelector(std::move(scaler), std::move(w), bias, best_thresh);
}

double selector_slice_accuracy(const KeySliceSelector& selector,
                               const std::vector<SelectorCase>& cases) {
    if (cases.empty()) throw std::invalid_argument("selector_slice_accuracy: no cases");
    std::int64_t correct = 0, total = 0;
    for (const auto& c : cases) {
        const auto p = selector.probabilities(*c.volume);
        for (int y = 0; y < static_cast<int>(p.size()); ++y) {
            const bool truth = y >= c.key_range[0] && y <= c.key_range[1];
            const bool pred = p[y] >= selector.threshold();
            correct += truth == pred ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

SideClassifier::SideClassifier(StandardScaler scaler, std::vector<double> weights,
                               std::vector<double> bias, double high_threshold)
    : scaler_(std::move(scaler)), weights_(std::move(weights)), bias_(std::move(bias)),
      high_threshold_(high_threshold) {}

std::vector<double> SideClassifier::predict_proba(const Volume& side_volume) const {
    if (weights_.empty()) throw std::invalid_argument("classifier: model is untrained");
    const std::vector<double> z =
        scaler_.transform(side_features(side_volume, high_threshold_));
    const int n_classes = 3;
    std::vector<double> logits(n_classes);
    double zmax = -1e300;
    for (int k = 0; k < n_classes; ++k) {
        double s = bias_[k];
        for (std::size_t j = 0; j < z.size(); ++j) {
            s += weights_[static_cast<std::size_t>(k) * z.size() + j] * z[j];
        }
        logits[k] = s;
        zmax = std::max(zmax, s);
    }
    double denom = 0.0;
    for (double& l : logits) {
        l = std::exp(l - zmax);
        denom += l;
    }
    for (double& l : logits) l /= denom;
    return logits;
}

// Argmax with ties broken toward the more severe label (class order is
// healthy < chronic < fungal_ball).
int argmax_severe(const std::vector<double>& probs) {
    int arg = 0;
    for (int k = 1; k < static_cast<int>(probs.size()); ++k) {
        if (probs[k] >= probs[arg]) arg = k;
    }
    return arg;
}

DiagnosisLabel SideClassifier::predict(const Volume& side_volume) const {
    return static_cast<DiagnosisLabel>(argmax_severe(predict_proba(side_volume)));
}

SideClassifier train_side_classifier(const std::vector<SideSample>& samples,
                                     const SideClassifierConfig& config) {
    if (samples.empty()) throw std::invalid_argument("train_side_classifier: no samples");
    std::array<int, 3> class_counts{0, 0, 0};
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& s : samples) {
        if (s.side_volume == nullptr) {
            throw std::invalid_argument("train_side_classifier: null volume");
        }
        feats.push_back(side_features(*s.side_volume, config.high_threshold));
        labels.push_back(static_cast<int>(s.label));
        ++class_counts[static_cast<int>(s.label)];
    }
    for (int k = 0; k < 3; ++k) {
        if (class_counts[k] == 0) {
            throw TrainingFailureError(std::string("side classifier training set lacks class ") +
                                       label_name(static_cast<DiagnosisLabel>(k)));
        }
    }
    canonical_sort(feats, labels);
    StandardScaler scaler;
    scaler.fit(feats);
    std::vector<std::vector<double>> z(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) z[i] = scaler.transform(feats[i]);

    const std::vector<double> params = fit_softmax(z, labels, 3, config.gd);
    const std::size_t dim = feats.front().size();
    std::vector<double> W(params.begin(), params.begin() + 3 * dim);
    std::vector<double> b(params.begin() + 3 * dim, params.end());
    return SideClassifier(std::move(scaler), std::move(W), std::move(b),
                          config.high_threshold);
}

Volume extract_substack(const Volume& vol, std::array<int, 2> y_range) {
    if (y_range[0] < 0 || y_range[1] >= vol.dims[1] || y_range[0] > y_range[1]) {
        throw std::invalid_argument("extract_substack: y range out of bounds");
    }
    Volume out;
    out.dims = {vol.dims[0], y_range[1] - y_range[0] + 1, vol.dims[2]};
    out.spacing_mm = vol.spacing_mm;
    out.origin_mm = vol.origin_mm;
    out.origin_mm[1] += y_range[0] * vol.spacing_mm[1];
    out.data.resize(out.voxel_count());
    for (int z = 0; z < out.dims[2]; ++z) {
        for (int y = 0; y < out.dims[1]; ++y) {
            for (int x = 0; x < out.dims[0]; ++x) {
                out.at(x, y, z) = vol.at(x, y + y_range[0], z);
            }
        }
    }
    return out;
}

std::pair<Volume, Volume> split_sides(const Volume& vol) {
    const int nx = vol.dims[0];
    if (nx < 4) throw std::invalid_argument("split_sides: volume must have nx >= 4");
    // Odd widths give the extra midline column to the left half.
    const int left_w = (nx + 1) / 2;
    const int right_w = nx / 2;
    // Both halves use the same local convention: x = 0 is the lateral edge
    // and the largest x touches the midline. The right half is mirrored, so
    // one classifier serves both sides and mirroring the input swaps the
    // outputs (bitwise, for even widths).
    const auto make_half = [&](int width, bool mirrored) {
        Volume h;
        h.dims = {width, vol.dims[1], vol.dims[2]};
        h.spacing_mm = vol.spacing_mm;
        h.origin_mm = vol.origin_mm;
        // Re-center: the half becomes its own object centered on x = 0.
        h.origin_mm[0] = -vol.spacing_mm[0] * (h.dims[0] - 1) / 2.0;
        h.data.resize(h.voxel_count());
        for (int z = 0; z < h.dims[2]; ++z) {
            for (int y = 0; y < h.dims[1]; ++y) {
                for (int x = 0; x < width; ++x) {
                    h.at(x, y, z) = mirrored ? vol.at(nx - 1 - x, y, z) : vol.at(x, y, z);
                }
            }
        }
        return h;
    };
    return {make_half(left_w, false), make_half(right_w, true)};
}

Diagnosis diagnose(const KeySliceSelector& selector, const SideClassifier& classifier,
                   const Volume& vol) {
    Diagnosis d;
    d.slice_interval = selector.select(vol);
    const Volume sub = extract_substack(vol, d.slice_interval);
    const auto [left, right] = split_sides(sub);
    const Volume* sides[2] = {&left, &right};
    for (int s = 0; s < 2; ++s) {
        d.sides[s].probabilities = classifier.predict_proba(*sides[s]);
        d.sides[s].label = static_cast<DiagnosisLabel>(argmax_severe(d.sides[s].probabilities));
    }
    return d;
}

Volume occlusion_saliency(const SideClassifier& classifier, const Volume& side_volume,
                          int patch, int stride) {
    if (patch < 1 || stride < 1) {
        throw std::invalid_argument("occlusion_saliency: patch and stride must be >= 1");
    }
    if (patch > side_volume.dims[0] || patch > side_volume.dims[1] ||
        patch > side_volume.dims[2]) {
        throw std::invalid_argument("occlusion_saliency: patch larger than the volume");
    }
    const auto base_probs = classifier.predict_proba(side_volume);
    const int predicted = argmax_severe(base_probs);
    const double base_p = base_probs[predicted];

    double mean = 0.0;
    for (const float v : side_volume.data) mean += v;
    mean /= static_cast<double>(side_volume.data.size());

    Volume saliency = side_volume;
    std::fill(saliency.data.begin(), saliency.data.end(), 0.0f);
    Volume counts = saliency;

    const auto starts = [&](int extent) {
        std::vector<int> s;
        for (int a = 0;; a += stride) {
            if (a + patch >= extent) {
                s.push_back(extent - patch);
                break;
            }
            s.push_back(a);
        }
        return s;
    };
    Volume scratch = side_volume;
    for (const int sx : starts(side_volume.dims[0])) {
        for (const int sy : starts(side_volume.dims[1])) {
            for (const int sz : starts(side_volume.dims[2])) {
                Volume& w = scratch;
                for (int z = sz; z < sz + patch; ++z) {
                    for (int y = sy; y < sy + patch; ++y) {
                        for (int x = sx; x < sx + patch; ++x) {
                            w.at(x, y, z) = static_cast<float>(mean);
                        }
                    }
                }
                const double p = classifier.predict_proba(w)[predicted];
                const float drop = static_cast<float>(base_p - p);
                for (int z = sz; z < sz + patch; ++z) {
                    for (int y = sy; y < sy + patch; ++y) {
                        for (int x = sx; x < sx + patch; ++x) {
                            saliency.at(x, y, z) += drop;
                            counts.at(x, y, z) += 1.0f;
                            w.at(x, y, z) = side_volume.at(x, y, z);
                        }
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < saliency.data.size(); ++i) {
        if (counts.data[i] > 0.0f) saliency.data[i] /= counts.data[i];
    }
    // Normalize to [0, 1]; a constant map (e.g. uniform input) becomes zeros.
    float lo = saliency.data[0], hi = saliency.data[0];
    for (const float v : saliency.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo) {
        for (float& v : saliency.data) v = (v - lo) / (hi - lo);
    } else {
        std::fill(saliency.data.begin(), saliency.data.end(), 0.0f);
    }
    return saliency;
}

void save_diagnosis_model(const std::filesystem::path& path, const DiagnosisModel& model) {
    ModelFile f;
    f.header["kind"] = "diagnosis";
    f.header["class_order"] = {"healthy", "chronic", "fungal_ball"};
    f.header["selector"] = {
        {"feature_spec", kSliceFeatureSpec},
        {"n_features", kSliceFeatureCount},
        {"threshold", model.selector.threshold()},
    };
    f.header["classifier"] = {
        {"feature_spec", kSideFeatureSpec},
        {"n_features", kSideFeatureCount},
        {"high_threshold", model.classifier.high_threshold()},
    };
    // Payload layout: selector scaler mean/sd, selector w, selector bias,
    // classifier scaler mean/sd, classifier W (3xF), classifier bias (3).
    auto& p = f.params;
    const auto append = [&p](const std::vector<double>& v) {
        p.insert(p.end(), v.begin(), v.end());
    };
    append(model.selector.scaler().mean);
    append(model.selector.scaler().sd);
    append(model.selector.weights());
    p.push_back(model.selector.bias());
    append(model.classifier.scaler().mean);
    append(model.classifier.scaler().sd);
    append(model.classifier.weights());
    append(model.classifier.bias());
    write_model(path, f);
}

DiagnosisModel load_diagnosis_model(const std::filesystem::path& path) {
    const ModelFile f = read_model(path);
    try {
        if (f.header.at("kind").get<std::string>() != "diagnosis") {
            throw IoError("model file " + path.string() + ": not a diagnosis model");
        }
        if (f.header.at("selector").at("feature_spec").get<std::string>() !=
                kSliceFeatureSpec ||
            f.header.at("classifier").at("feature_spec").get<std::string>() !=
                kSideFeatureSpec) {
            throw IoError("model file " + path.string() +
                          ": feature spec does not match this build");
        }
        const std::size_t sf = f.header.at("selector").at("n_features").get<std::size_t>();
        const std::size_t cf = f.header.at("classifier").at("n_features").get<std::size_t>();
        const std::size_t expected = (2 * sf + sf + 1) + (2 * cf + 3 * cf + 3);
        if (f.params.size() != expected) {
            throw IoError("model file " + path.string() + ": payload size mismatch");
        }
        std::size_t off = 0;
        const auto take = [&](std::size_t n) {
            std::vector<double> v(f.params.begin() + off, f.params.begin() + off + n);
            off += n;
            return v;
        };
        StandardScaler sel_scaler;
        sel_scaler.mean = take(sf);
        sel_scaler.sd = take(sf);
        std::vector<double> sel_w = take(sf);
        const double sel_b = take(1)[0];
        const double threshold = f.header.at("selector").at("threshold").get<double>();
        StandardScaler cls_scaler;
        cls_scaler.mean = take(cf);
        cls_scaler.sd = take(cf);
        std::vector<double> cls_w = take(3 * cf);
        std::vector<double> cls_b = take(3);
        DiagnosisModel m;
        m.selector = KeySliceSelector(std::move(sel_scaler), std::move(sel_w), sel_b, threshold);
        m.classifier = SideClassifier(
            std::move(cls_scaler), std::move(cls_w), std::move(cls_b),
            f.header.at("classifier").at("high_threshold").get<double>());
        return m;
    } catch (const Json::exception& e) {
        throw IoError("model file " + path.string() + ": " + e.what());
    }
}

}  // namespace cbctcad
