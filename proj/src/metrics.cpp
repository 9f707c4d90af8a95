#include "cbctcad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cbctcad/errors.hpp"

namespace cbctcad {
namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

void check_same_shape(const Image& a, const Image& b, const char* who) {
    if (a.width != b.width || a.height != b.height) {
        throw std::invalid_argument(std::string(who) + ": image shapes differ");
    }
    if (a.width < 1 || a.height < 1) {
        throw std::invalid_argument(std::string(who) + ": empty image");
    }
}

}  // namespace

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
        throw std::invalid_argument("confusion matrix: class index out of range");
    }
    ++at(truth, predicted);
}

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t tot = cm.total();
    if (tot == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
    std::int64_t diag = 0;
    for (int k = 0; k < cm.n; ++k) diag += cm.at(k, k);
    return static_cast<double>(diag) / static_cast<double>(tot);
}

std::vector<PrfEntry> per_class_prf(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("per_class_prf: empty confusion matrix");
    std::vector<PrfEntry> out(cm.n);
    for (int k = 0; k < cm.n; ++k) {
        std::int64_t tp = cm.at(k, k), fp = 0, fn = 0;
        for (int j = 0; j < cm.n; ++j) {
            if (j == k) continue;
            fp += cm.at(j, k);
            fn += cm.at(k, j);
        }
        PrfEntry& e = out[k];
        e.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
        e.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
        e.f1 = safe_div(2.0 * e.precision * e.recall, e.precision + e.recall);
        e.support = tp + fn;
    }
    return out;
}

PrfAverages average_prf(const ConfusionMatrix& cm) {
    const auto per = per_class_prf(cm);
    PrfAverages avg;
    double wsum = 0.0;
    for (const auto& e : per) {
        avg.macro.precision += e.precision / per.size();
        avg.macro.recall += e.recall / per.size();
        avg.macro.f1 += e.f1 / per.size();
        avg.weighted.precision += e.precision * e.support;
        avg.weighted.recall += e.recall * e.support;
        avg.weighted.f1 += e.f1 * e.support;
        wsum += static_cast<double>(e.support);
        avg.macro.support += e.support;
    }
    avg.weighted.support = avg.macro.support;
    if (wsum > 0.0) {
        avg.weighted.precision /= wsum;
        avg.weighted.recall /= wsum;
        avg.weighted.f1 /= wsum;
    }
    return avg;
}

double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) {
        throw std::invalid_argument("roc_auc: labels/scores size mismatch");
    }
    const std::size_t n = labels.size();
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument("roc_auc: labels must be 0 or 1");
        }
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument("roc_auc: non-finite score");
        }
        n_pos += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedAucError("roc_auc: need both a positive and a negative sample");
    }

    // Midrank assignment: tied scores share the average of their ranks.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) pos_rank_sum += rank[k];
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MulticlassAuc multiclass_auc(const std::vector<int>& labels,
                             const std::vector<std::vector<double>>& probabilities) {
    if (labels.size() != probabilities.size() || labels.empty()) {
        throw std::invalid_argument("multiclass_auc: labels/probabilities size mismatch");
    }
    const std::size_t n_classes = probabilities.front().size();
    if (n_classes < 2) throw std::invalid_argument("multiclass_auc: need >= 2 classes");
    for (const auto& p : probabilities) {
        if (p.size() != n_classes) {
            throw std::invalid_argument("multiclass_auc: ragged probability rows");
        }
    }

    MulticlassAuc out;
    std::vector<int> bin(labels.size());
    std::vector<double> col(labels.size());
    std::vector<int> micro_labels;
    std::vector<double> micro_scores;
    micro_labels.reserve(labels.size() * n_classes);
    micro_scores.reserve(labels.size() * n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) {
        for (std::size_t s = 0; s < labels.size(); ++s) {
            bin[s] = labels[s] == static_cast<int>(k) ? 1 : 0;
            col[s] = probabilities[s][k];
            micro_labels.push_back(bin[s]);
            micro_scores.push_back(col[s]);
        }
        try {
            out.one_vs_rest.push_back(roc_auc(bin, col));
        } catch (const UndefinedAucError&) {
            throw UndefinedAucError("multiclass_auc: class " + std::to_string(k) +
                                    " has no positive or no negative samples");
        }
    }
    out.macro = std::accumulate(out.one_vs_rest.begin(), out.one_vs_rest.end(), 0.0) /
                static_cast<double>(n_classes);
    out.micro = roc_auc(micro_labels, micro_scores);
    return out;
}

double psnr(const Image& reference, const Image& test, double data_range) {
    check_same_shape(reference, test, "psnr");
    if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be > 0");
    const double err = mse(reference, test);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / err);
}

double mse(const Image& a, const Image& b) {
    check_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double volume_rmse(const Volume& a, const Volume& b) {
    if (a.dims != b.dims) throw std::invalid_argument("volume_rmse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

double ssim(const Image& reference, const Image& test, const SsimOptions& options) {
    check_same_shape(reference, test, "ssim");
    constexpr int kWin = 11;
    constexpr int kHalf = kWin / 2;
    if (reference.width < kWin || reference.height < kWin) {
        throw std::invalid_argument("ssim: images must be at least 11x11");
    }
    if (!(options.data_range > 0.0)) {
        throw std::invalid_argument("ssim: data_range must be > 0");
    }

    // Normalized 11x11 Gaussian weights.
    double w[kWin][kWin];
    double wsum = 0.0;
    for (int r = 0; r < kWin; ++r) {
        for (int c = 0; c < kWin; ++c) {
            const double dr = r - kHalf, dc = c - kHalf;
            w[r][c] = std::exp(-(dr * dr + dc * dc) / (2.0 * options.sigma * options.sigma));
            wsum += w[r][c];
        }
    }
    for (int r = 0; r < kWin; ++r) {
        for (int c = 0; c < kWin; ++c) w[r][c] /= wsum;
    }

    const double c1 = options.k1 * options.data_range * options.k1 * options.data_range;
    const double c2 = options.k2 * options.data_range * options.k2 * options.data_range;

    double total = 0.0;
    std::int64_t count = 0;
    for (int y = kHalf; y < reference.height - kHalf; ++y) {
        for (int x = kHalf; x < reference.width - kHalf; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int r = 0; r < kWin; ++r) {
                for (int c = 0; c < kWin; ++c) {
                    mu_a += w[r][c] * reference.at(y + r - kHalf, x + c - kHalf);
                    mu_b += w[r][c] * test.at(y + r - kHalf, x + c - kHalf);
                }
            }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int r = 0; r < kWin; ++r) {
                for (int c = 0; c < kWin; ++c) {
                    const double da = reference.at(y + r - kHalf, x + c - kHalf) - mu_a;
                    const double db = test.at(y + r - kHalf, x + c - kHalf) - mu_b;
                    va += w[r][c] * da * da;
                    vb += w[r][c] * db * db;
                    cov += w[r][c] * da * db;
                }
            }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double multiscale_ssim(const Image& reference, const Image& test, int levels,
                       const SsimOptions& options) {
    if (levels < 1) throw std::invalid_argument("multiscale_ssim: levels must be >= 1");
    check_same_shape(reference, test, "multiscale_ssim");
    Image a = reference, b = test;
    double total = 0.0;
    int used = 0;
    for (int l = 0; l < levels; ++l) {
        if (a.width < 11 || a.height < 11) break;
        total += ssim(a, b, options);
        ++used;
        // 2x2 mean pooling for the next level.
        const int nw = a.width / 2, nh = a.height / 2;
        if (nw < 1 || nh < 1) break;
        Image na(nw, nh), nb(nw, nh);
        for (int y = 0; y < nh; ++y) {
            for (int x = 0; x < nw; ++x) {
                na.at(y, x) = (a.at(2 * y, 2 * x) + a.at(2 * y, 2 * x + 1) +
                               a.at(2 * y + 1, 2 * x) + a.at(2 * y + 1, 2 * x + 1)) /
                              4.0f;
                nb.at(y, x) = (b.at(2 * y, 2 * x) + b.at(2 * y, 2 * x + 1) +
                               b.at(2 * y + 1, 2 * x) + b.at(2 * y + 1, 2 * x + 1)) /
                              4.0f;
            }
        }
        a = std::move(na);
        b = std::move(nb);
    }
    if (used == 0) throw std::invalid_argument("multiscale_ssim: images smaller than window");
    return total / used;
}

}  // namespace cbctcad
