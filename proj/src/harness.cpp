#include "cbctcad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cbctcad/errors.hpp"
#include "cbctcad/parallel.hpp"
#include "cbctcad/projector.hpp"
#include "cbctcad/rng.hpp"

namespace cbctcad {
namespace {

namespace fs = std::filesystem;

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (...) {
        std::throw_with_nested(
            std::runtime_error("experiment stage '" + name + "' failed"));
    }
}

MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    if (xs.empty()) return out;
    for (const double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    for (const double x : xs) out.sd += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(out.sd / static_cast<double>(xs.size()));
    return out;
}

// JSON value for possibly-infinite quantities (PSNR of identical images):
// infinities are encoded as the strings "inf" / "-inf".
Json json_number(double v) {
    if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
    return Json(v);
}

std::string csv_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// Evenly spaced inclusive sample of K distinct slice indices from [lo, hi].
std::vector<int> spaced_indices(int lo, int hi, int k) {
    std::vector<int> out;
    const int span = hi - lo + 1;
    for (int i = 0; i < k; ++i) {
        const int idx = lo + static_cast<int>((static_cast<double>(span) * (i + 0.5)) / k);
        out.push_back(std::min(hi, std::max(lo, idx)));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct PreparedCase {
    const GeneratedCase* source = nullptr;
    Volume pcbct;
};

constexpr const char* kArmBaseline = "baseline";
constexpr const char* kArmProposed = "proposed";

struct ArmModels {
    Denoiser denoiser;
    DiagnosisModel diagnosis;
};

int pessimistic_prediction(int truth) { return (truth + 1) % 3; }

}  // namespace

void ExperimentConfig::validate() const {
    if (internal_cases < 1 || external_cases < 1) {
        throw std::invalid_argument("experiment: need at least one case per split");
    }
    if (folds < 2) throw std::invalid_argument("experiment: folds must be >= 2");
    if (internal_cases < folds) {
        throw std::invalid_argument("experiment: internal_cases must be >= folds");
    }
    const auto check_counts = [](const std::array<int, 3>& c, int total, const char* who) {
        if (c[0] + c[1] + c[2] != total) {
            throw std::invalid_argument(std::string("experiment: ") + who +
                                        " label counts must sum to the case count");
        }
    };
    check_counts(internal_counts, internal_cases, "internal");
    check_counts(external_counts, external_cases, "external");
    for (const int d : dims) {
        if (d < 32) throw std::invalid_argument("experiment: dims must be >= 32");
    }
    if (denoiser != "identity" && denoiser != "tv" && denoiser != "learned") {
        throw std::invalid_argument("experiment: unknown denoiser '" + denoiser + "'");
    }
    filter_window_from_name(window);  // throws on unknown window
    if (denoiser_epochs < 1 || denoiser_batch < 1 || denoiser_channels < 1 ||
        denoiser_slices_per_case < 1) {
        throw std::invalid_argument("experiment: denoiser hyperparameters must be >= 1");
    }
    if (out_dir.empty()) throw std::invalid_argument("experiment: out_dir must be set");
}

Json experiment_config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["seed"] = cfg.seed;
    j["internal_cases"] = cfg.internal_cases;
    j["external_cases"] = cfg.external_cases;
    j["internal_counts"] = cfg.internal_counts;
    j["external_counts"] = cfg.external_counts;
    j["dims"] = cfg.dims;
    j["extent_mm"] = cfg.extent_mm;
    j["sod_mm"] = cfg.sod_mm;
    j["oid_mm"] = cfg.oid_mm;
    j["detector_mm"] = cfg.detector_mm;
    j["detector_px"] = cfg.detector_px;
    j["angle_step_deg"] = cfg.angle_step_deg;
    j["arc_deg"] = cfg.arc_deg;
    j["window"] = cfg.window;
    j["folds"] = cfg.folds;
    j["denoiser"] = cfg.denoiser;
    j["denoiser_epochs"] = cfg.denoiser_epochs;
    j["denoiser_lr"] = cfg.denoiser_lr;
    j["denoiser_batch"] = cfg.denoiser_batch;
    j["denoiser_channels"] = cfg.denoiser_channels;
    j["denoiser_slices_per_case"] = cfg.denoiser_slices_per_case;
    j["tv_weight"] = cfg.tv_weight;
    j["tv_iterations"] = cfg.tv_iterations;
    j["selector_gd"] = {{"iterations", cfg.selector_gd.iterations},
                        {"learning_rate", cfg.selector_gd.learning_rate},
                        {"l2", cfg.selector_gd.l2}};
    j["classifier_gd"] = {{"iterations", cfg.classifier_gd.iterations},
                          {"learning_rate", cfg.classifier_gd.learning_rate},
                          {"l2", cfg.classifier_gd.l2}};
    j["out_dir"] = cfg.out_dir;
    j["write_volumes"] = cfg.write_volumes;
    return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    ExperimentConfig cfg;
    try {
        const auto get = [&j](const char* key, auto& target) {
            if (j.contains(key)) target = j.at(key).template get<std::decay_t<decltype(target)>>();
        };
        get("seed", cfg.seed);
        get("internal_cases", cfg.internal_cases);
        get("external_cases", cfg.external_cases);
        get("internal_counts", cfg.internal_counts);
        get("external_counts", cfg.external_counts);
        get("dims", cfg.dims);
        get("extent_mm", cfg.extent_mm);
        get("sod_mm", cfg.sod_mm);
        get("oid_mm", cfg.oid_mm);
        get("detector_mm", cfg.detector_mm);
        get("detector_px", cfg.detector_px);
        get("angle_step_deg", cfg.angle_step_deg);
        get("arc_deg", cfg.arc_deg);
        get("window", cfg.window);
        get("folds", cfg.folds);
        get("denoiser", cfg.denoiser);
        get("denoiser_epochs", cfg.denoiser_epochs);
        get("denoiser_lr", cfg.denoiser_lr);
        get("denoiser_batch", cfg.denoiser_batch);
        get("denoiser_channels", cfg.denoiser_channels);
        get("denoiser_slices_per_case", cfg.denoiser_slices_per_case);
        get("tv_weight", cfg.tv_weight);
        get("tv_iterations", cfg.tv_iterations);
        if (j.contains("selector_gd")) {
            const auto& g = j.at("selector_gd");
            cfg.selector_gd.iterations = g.value("iterations", cfg.selector_gd.iterations);
            cfg.selector_gd.learning_rate =
                g.value("learning_rate", cfg.selector_gd.learning_rate);
            cfg.selector_gd.l2 = g.value("l2", cfg.selector_gd.l2);
        }
        if (j.contains("classifier_gd")) {
            const auto& g = j.at("classifier_gd");
            cfg.classifier_gd.iterations = g.value("iterations", cfg.classifier_gd.iterations);
            cfg.classifier_gd.learning_rate =
                g.value("learning_rate", cfg.classifier_gd.learning_rate);
            cfg.classifier_gd.l2 = g.value("l2", cfg.classifier_gd.l2);
        }
        get("out_dir", cfg.out_dir);
        get("write_volumes", cfg.write_volumes);
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ReportAggregate aggregate_report(const MetricsReport& report) {
    ReportAggregate agg;
    std::vector<double> acc, pm, rm, fm, am, ai, ps, ss;
    std::array<std::vector<double>, 3> f1c;
    for (const auto& f : report.folds) {
        acc.push_back(f.accuracy);
        pm.push_back(f.averages.macro.precision);
        rm.push_back(f.averages.macro.recall);
        fm.push_back(f.averages.macro.f1);
        am.push_back(f.auc.macro);
        ai.push_back(f.auc.micro);
        ps.push_back(f.quality.psnr_mean);
        ss.push_back(f.quality.ssim_mean);
        for (int k = 0; k < 3; ++k) f1c[k].push_back(f.per_class[k].f1);
    }
    agg.accuracy = mean_sd(acc);
    agg.precision_macro = mean_sd(pm);
    agg.recall_macro = mean_sd(rm);
    agg.f1_macro = mean_sd(fm);
    agg.auc_macro = mean_sd(am);
    agg.auc_micro = mean_sd(ai);
    agg.psnr = mean_sd(ps);
    agg.ssim = mean_sd(ss);
    for (int k = 0; k < 3; ++k) agg.f1_per_class[k] = mean_sd(f1c[k]);
    return agg;
}

Json report_to_json(const MetricsReport& report, const ExperimentConfig& cfg,
                    const std::vector<std::string>& internal_ids,
                    const std::vector<std::string>& external_ids,
                    const std::vector<int>& fold_of_case) {
    Json j;
    j["format"] = "cbctcad-report-v1";
    j["arm"] = report.arm;
    j["scoring"] = "per-side";
    j["class_order"] = {"healthy", "chronic", "fungal_ball"};
    j["config"] = experiment_config_to_json(cfg);

    Json folds = Json::array();
    for (const auto& f : report.folds) {
        Json fj;
        fj["fold"] = f.fold;
        fj["accuracy"] = f.accuracy;
        Json per_class = Json::array();
        for (int k = 0; k < 3; ++k) {
            per_class.push_back({{"class", label_name(static_cast<DiagnosisLabel>(k))},
                                 {"precision", f.per_class[k].precision},
                                 {"recall", f.per_class[k].recall},
                                 {"f1", f.per_class[k].f1},
                                 {"support", f.per_class[k].support},
                                 {"auc_ovr", f.auc.one_vs_rest[k]}});
        }
        fj["per_class"] = std::move(per_class);
        fj["precision_macro"] = f.averages.macro.precision;
        fj["recall_macro"] = f.averages.macro.recall;
        fj["f1_macro"] = f.averages.macro.f1;
        fj["precision_weighted"] = f.averages.weighted.precision;
        fj["recall_weighted"] = f.averages.weighted.recall;
        fj["f1_weighted"] = f.averages.weighted.f1;
        fj["auc_macro"] = f.auc.macro;
        fj["auc_micro"] = f.auc.micro;
        fj["psnr_mean"] = json_number(f.quality.psnr_mean);
        fj["psnr_sd"] = json_number(f.quality.psnr_sd);
        fj["ssim_mean"] = f.quality.ssim_mean;
        fj["ssim_sd"] = f.quality.ssim_sd;
        fj["quality_slices"] = f.quality.n_slices;
        fj["no_sinus_count"] = f.no_sinus_count;
        Json cm = Json::array();
        for (int t = 0; t < 3; ++t) {
            Json row = Json::array();
            for (int p = 0; p < 3; ++p) row.push_back(f.confusion.at(t, p));
            cm.push_back(std::move(row));
        }
        fj["confusion"] = std::move(cm);
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);

    const ReportAggregate agg = aggregate_report(report);
    const auto ms = [](const MeanSd& m) {
        return Json{{"mean", json_number(m.mean)}, {"sd", json_number(m.sd)}};
    };
    j["aggregate"] = {{"accuracy", ms(agg.accuracy)},
                      {"precision_macro", ms(agg.precision_macro)},
                      {"recall_macro", ms(agg.recall_macro)},
                      {"f1_macro", ms(agg.f1_macro)},
                      {"auc_macro", ms(agg.auc_macro)},
                      {"auc_micro", ms(agg.auc_micro)},
                      {"psnr", ms(agg.psnr)},
                      {"ssim", ms(agg.ssim)},
                      {"f1_healthy", ms(agg.f1_per_class[0])},
                      {"f1_chronic", ms(agg.f1_per_class[1])},
                      {"f1_fungal_ball", ms(agg.f1_per_class[2])}};
    j["split"] = {{"internal_ids", internal_ids},
                  {"external_ids", external_ids},
                  {"fold_of_internal_case", fold_of_case}};
    return j;
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "arm,fold,metric,class,value\n";
    const auto row = [&](int fold, const std::string& metric, const std::string& cls,
                         double value) {
        os << report.arm << ',' << fold << ',' << metric << ',' << cls << ','
           << csv_number(value) << '\n';
    };
    for (const auto& f : report.folds) {
        row(f.fold, "accuracy", "all", f.accuracy);
        for (int k = 0; k < 3; ++k) {
            const std::string cls = label_name(static_cast<DiagnosisLabel>(k));
            row(f.fold, "precision", cls, f.per_class[k].precision);
            row(f.fold, "recall", cls, f.per_class[k].recall);
            row(f.fold, "f1", cls, f.per_class[k].f1);
            row(f.fold, "auc_ovr", cls, f.auc.one_vs_rest[k]);
        }
        row(f.fold, "precision", "macro", f.averages.macro.precision);
        row(f.fold, "recall", "macro", f.averages.macro.recall);
        row(f.fold, "f1", "macro", f.averages.macro.f1);
        row(f.fold, "auc", "macro", f.auc.macro);
        row(f.fold, "auc", "micro", f.auc.micro);
        row(f.fold, "psnr_mean", "all", f.quality.psnr_mean);
        row(f.fold, "ssim_mean", "all", f.quality.ssim_mean);
        row(f.fold, "no_sinus_count", "all", static_cast<double>(f.no_sinus_count));
    }
    return os.str();
}

std::vector<ArmComparison> compare_arms(const MetricsReport& baseline,
                                        const MetricsReport& proposed) {
    if (baseline.folds.size() != proposed.folds.size()) {
        throw std::invalid_argument("compare_arms: fold counts differ");
    }
    if (baseline.folds.empty()) {
        throw std::invalid_argument("compare_arms: empty reports");
    }
    const ReportAggregate b = aggregate_report(baseline);
    const ReportAggregate p = aggregate_report(proposed);
    std::vector<ArmComparison> rows;
    const auto add = [&rows](const std::string& name, const MeanSd& bb, const MeanSd& pp) {
        rows.push_back({name, bb.mean, pp.mean, pp.mean - bb.mean});
    };
    add("accuracy", b.accuracy, p.accuracy);
    add("precision_macro", b.precision_macro, p.precision_macro);
    add("recall_macro", b.recall_macro, p.recall_macro);
    add("f1_macro", b.f1_macro, p.f1_macro);
    add("auc_macro", b.auc_macro, p.auc_macro);
    add("auc_micro", b.auc_micro, p.auc_micro);
    add("psnr", b.psnr, p.psnr);
    add("ssim", b.ssim, p.ssim);
    return rows;
}

Json comparison_to_json(const std::vector<ArmComparison>& rows) {
    Json j;
    j["format"] = "cbctcad-compare-v1";
    Json metrics = Json::array();
    for (const auto& r : rows) {
        metrics.push_back({{"metric", r.metric},
                           {"baseline", json_number(r.baseline)},
                           {"proposed", json_number(r.proposed)},
                           {"delta", json_number(r.delta)}});
    }
    j["metrics"] = std::move(metrics);
    return j;
}

std::string comparison_to_csv(const std::vector<ArmComparison>& rows) {
    std::ostringstream os;
    os << "metric,baseline,proposed,delta\n";
    for (const auto& r : rows) {
        os << r.metric << ',' << csv_number(r.baseline) << ',' << csv_number(r.proposed)
           << ',' << csv_number(r.delta) << '\n';
    }
    return os.str();
}

std::string comparison_to_table(const std::vector<ArmComparison>& rows) {
    std::ostringstream os;
    os << "metric              baseline   proposed   (delta)\n";
    os << "---------------------------------------------------\n";
    os.setf(std::ios::fixed);
    for (const auto& r : rows) {
        os.precision(4);
        os << r.metric;
        for (std::size_t i = r.metric.size(); i < 20; ++i) os << ' ';
        os.width(8);
        os << r.baseline << "   ";
        os.width(8);
        os << r.proposed << "   (";
        os << (r.delta >= 0 ? "+" : "");
        os << r.delta << ")\n";
    }
    return os.str();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out_root = resolve_output_path(cfg.out_dir);
    fs::create_directories(out_root);
    write_json_file(out_root / "config.json", experiment_config_to_json(cfg));

    Rng root(cfg.seed);
    ConeBeamGeometry geom;
    geom.sod_mm = cfg.sod_mm;
    geom.oid_mm = cfg.oid_mm;
    geom.detector_mm = cfg.detector_mm;
    geom.detector_px = cfg.detector_px;
    geom.angles_deg = half_scan_angles(cfg.angle_step_deg, cfg.arc_deg);
    geom.validate();
    const FilterWindow window = filter_window_from_name(cfg.window);
    write_geometry(out_root / "data" / "geometry.json", geom);

    // ---- stage: synthesize datasets --------------------------------------
    std::vector<GeneratedCase> internal, external;
    run_stage("generate-datasets", [&] {
        DatasetSpec ispec;
        ispec.n_cases = cfg.internal_cases;
        ispec.side_counts = cfg.internal_counts;
        ispec.dims = cfg.dims;
        ispec.extent_mm = cfg.extent_mm;
        ispec.seed = root.fork("internal").seed();
        ispec.id_prefix = "case";
        internal = generate_dataset(ispec);
        DatasetSpec espec = ispec;
        espec.n_cases = cfg.external_cases;
        espec.side_counts = cfg.external_counts;
        espec.seed = root.fork("external").seed();
        espec.id_prefix = "ext";
        external = generate_dataset(espec);
        return 0;
    });

    // ---- stage: pseudo acquisition (sparse-view artifact injection) ------
    std::vector<PreparedCase> internal_prep(internal.size()), external_prep(external.size());
    run_stage("synthesize-pcbct", [&] {
        const auto prep = [&](const std::vector<GeneratedCase>& cases,
                              std::vector<PreparedCase>& out) {
            parallel_for(cases.size(), [&](std::size_t i) {
                out[i].source = &cases[i];
                out[i].pcbct = synthesize_pcbct(cases[i].labeled.volume, geom, window);
            });
        };
        prep(internal, internal_prep);
        prep(external, external_prep);
        return 0;
    });

    // ---- stage: persist datasets ------------------------------------------
    std::vector<int> fold_of_case(internal.size());
    for (std::size_t i = 0; i < internal.size(); ++i) {
        fold_of_case[i] = static_cast<int>(i % static_cast<std::size_t>(cfg.folds));
    }
    run_stage("write-datasets", [&] {
        const auto write_split = [&](const std::vector<PreparedCase>& cases,
                                     const std::string& name) {
            Manifest manifest;
            manifest.extra = {{"dims", cfg.dims},
                              {"extent_mm", cfg.extent_mm},
                              {"split", name}};
            for (const auto& pc : cases) {
                const auto& lc = pc.source->labeled;
                ManifestEntry e;
                e.id = lc.id;
                e.seed = lc.seed;
                e.labels = {label_name(lc.labels[0]), label_name(lc.labels[1])};
                e.key_slice_range = lc.key_slice_range;
                e.clean_stem = lc.id + "_clean";
                e.pcbct_stem = lc.id + "_pcbct";
                manifest.entries.push_back(e);
                if (cfg.write_volumes) {
                    write_volume(out_root / "data" / e.clean_stem, lc.volume);
                    write_volume(out_root / "data" / e.pcbct_stem, pc.pcbct);
                }
            }
            write_manifest(out_root / "data" / (name + "_manifest.json"), manifest);
        };
        write_split(internal_prep, "internal");
        write_split(external_prep, "external");
        return 0;
    });

    // ---- stage: cross-validated training + external evaluation -----------
    MetricsReport baseline_report{kArmBaseline, {}};
    MetricsReport proposed_report{kArmProposed, {}};

    for (int fold = 0; fold < cfg.folds; ++fold) {
        run_stage("fold-" + std::to_string(fold), [&] {
            std::vector<const PreparedCase*> train_cases;
            for (std::size_t i = 0; i < internal_prep.size(); ++i) {
                if (fold_of_case[i] != fold) train_cases.push_back(&internal_prep[i]);
            }

            // Proposed-arm denoiser.
            Denoiser proposed_denoiser = Denoiser::identity();
            if (cfg.denoiser == "tv") {
                TvConfig tv;
                tv.weight = cfg.tv_weight;
                tv.iterations = cfg.tv_iterations;
                proposed_denoiser = Denoiser::make_tv(tv);
            } else if (cfg.denoiser == "learned") {
                std::vector<TrainingPair> pairs;
                for (const auto* pc : train_cases) {
                    const auto& range = pc->source->labeled.key_slice_range;
                    for (const int y :
                         spaced_indices(range[0], range[1], cfg.denoiser_slices_per_case)) {
                        pairs.push_back({coronal_slice(pc->pcbct, y),
                                         coronal_slice(pc->source->labeled.volume, y)});
                    }
                }
                ConvDenoiserConfig dcfg;
                dcfg.channels = cfg.denoiser_channels;
                dcfg.epochs = cfg.denoiser_epochs;
                dcfg.batch_size = cfg.denoiser_batch;
                dcfg.learning_rate = cfg.denoiser_lr;
                dcfg.seed = root.fork("denoiser_fold_" + std::to_string(fold)).seed();
                proposed_denoiser = Denoiser::learned(
                    std::move(train_denoiser(pairs, dcfg).model));
            }
            save_denoiser(out_root / "models" / ("fold_" + std::to_string(fold)) /
                              "denoiser.cbm",
                          proposed_denoiser);

            // Train and evaluate each arm on its own version of the data.
            const std::array<const char*, 2> arm_names{kArmBaseline, kArmProposed};
            for (int arm = 0; arm < 2; ++arm) {
                const bool is_proposed = arm == 1;
                const Denoiser identity = Denoiser::identity();
                const Denoiser& active = is_proposed ? proposed_denoiser : identity;

                std::vector<Volume> train_processed(train_cases.size());
                parallel_for(train_cases.size(), [&](std::size_t i) {
                    train_processed[i] = active.denoise_volume(train_cases[i]->pcbct);
                });

                std::vector<SelectorCase> sel_cases;
                std::vector<Volume> side_store;
                side_store.reserve(train_cases.size() * 2);
                std::vector<SideSample> side_samples;
                for (std::size_t i = 0; i < train_cases.size(); ++i) {
                    const auto& lc = train_cases[i]->source->labeled;
                    sel_cases.push_back({&train_processed[i], lc.key_slice_range});
                    const Volume sub =
                        extract_substack(train_processed[i], lc.key_slice_range);
                    auto [left, right] = split_sides(sub);
                    side_store.push_back(std::move(left));
                    side_samples.push_back({&side_store.back(), lc.labels[0]});
                    side_store.push_back(std::move(right));
                    side_samples.push_back({&side_store.back(), lc.labels[1]});
                }

                SelectorTrainConfig sel_cfg;
                sel_cfg.gd = cfg.selector_gd;
                SideClassifierConfig cls_cfg;
                cls_cfg.gd = cfg.classifier_gd;
                DiagnosisModel model;
                model.selector = train_key_slice_selector(sel_cases, sel_cfg);
                model.classifier = train_side_classifier(side_samples, cls_cfg);
                save_diagnosis_model(out_root / "models" /
                                         ("fold_" + std::to_string(fold)) /
                                         (std::string("diagnosis_") + arm_names[arm] + ".cbm"),
                                     model);

                // External evaluation.
                FoldMetrics fm;
                fm.fold = fold;
                std::vector<int> truth_labels;
                std::vector<std::vector<double>> probs;
                std::vector<TrainingPair> quality_pairs;
                for (const auto& pc : external_prep) {
                    const Volume processed = active.denoise_volume(pc.pcbct);
                    const auto& lc = pc.source->labeled;
                    for (const int y : spaced_indices(lc.key_slice_range[0],
                                                      lc.key_slice_range[1],
                                                      cfg.denoiser_slices_per_case)) {
                        quality_pairs.push_back({coronal_slice(processed, y),
                                                 coronal_slice(lc.volume, y)});
                    }
                    std::array<int, 2> truth{static_cast<int>(lc.labels[0]),
                                             static_cast<int>(lc.labels[1])};
                    try {
                        const Diagnosis d =
                            diagnose(model.selector, model.classifier, processed);
                        for (int s = 0; s < 2; ++s) {
                            fm.confusion.add(truth[s],
                                             static_cast<int>(d.sides[s].label));
                            truth_labels.push_back(truth[s]);
                            probs.push_back(d.sides[s].probabilities);
                        }
                    } catch (const NoSinusFoundError&) {
                        // Pessimistic scoring: a guaranteed-wrong prediction
                        // with uninformative probabilities.
                        ++fm.no_sinus_count;
                        for (int s = 0; s < 2; ++s) {
                            fm.confusion.add(truth[s], pessimistic_prediction(truth[s]));
                            truth_labels.push_back(truth[s]);
                            probs.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
                        }
                    }
                }
                fm.accuracy = accuracy(fm.confusion);
                fm.per_class = per_class_prf(fm.confusion);
                fm.averages = average_prf(fm.confusion);
                fm.auc = multiclass_auc(truth_labels, probs);
                // Denoiser quality for this arm: processed external key
                // slices against the clean phantoms. The identity arm
                // reports the raw sparse-view quality floor.
                Denoiser measured = Denoiser::identity();
                fm.quality = evaluate_denoiser(measured, quality_pairs);
                (is_proposed ? proposed_report : baseline_report).folds.push_back(fm);
            }
            return 0;
        });
    }

    // ---- stage: reports ----------------------------------------------------
    ExperimentResult result;
    result.out_dir = out_root;
    result.baseline = std::move(baseline_report);
    result.proposed = std::move(proposed_report);
    run_stage("write-reports", [&] {
        std::vector<std::string> internal_ids, external_ids;
        for (const auto& c : internal) internal_ids.push_back(c.labeled.id);
        for (const auto& c : external) external_ids.push_back(c.labeled.id);
        write_json_file(out_root / "reports" / "report_baseline.json",
                        report_to_json(result.baseline, cfg, internal_ids, external_ids,
                                       fold_of_case));
        write_json_file(out_root / "reports" / "report_proposed.json",
                        report_to_json(result.proposed, cfg, internal_ids, external_ids,
                                       fold_of_case));
        write_text_file(out_root / "reports" / "report_baseline.csv",
                        report_to_csv(result.baseline));
        write_text_file(out_root / "reports" / "report_proposed.csv",
                        report_to_csv(result.proposed));
        result.comparison = compare_arms(result.baseline, result.proposed);
        write_json_file(out_root / "reports" / "compare.json",
                        comparison_to_json(result.comparison));
        write_text_file(out_root / "reports" / "compare.csv",
                        comparison_to_csv(result.comparison));
        write_text_file(out_root / "reports" / "summary.txt",
                        comparison_to_table(result.comparison));
        return 0;
    });
    return result;
}

std::string render_run_summary(const std::filesystem::path& run_dir) {
    const fs::path reports = run_dir / "reports";
    const Json jb = read_json_file(reports / "report_baseline.json");
    const Json jp = read_json_file(reports / "report_proposed.json");
    const auto parse_report = [](const Json& j) {
        MetricsReport r;
        try {
            r.arm = j.at("arm").get<std::string>();
            for (const auto& fj : j.at("folds")) {
                FoldMetrics f;
                f.fold = fj.at("fold").get<int>();
                f.accuracy = fj.at("accuracy").get<double>();
                for (const auto& pc : fj.at("per_class")) {
                    PrfEntry e;
                    e.precision = pc.at("precision").get<double>();
                    e.recall = pc.at("recall").get<double>();
                    e.f1 = pc.at("f1").get<double>();
                    e.support = pc.at("support").get<std::int64_t>();
                    f.per_class.push_back(e);
                    f.auc.one_vs_rest.push_back(pc.at("auc_ovr").get<double>());
                }
                f.averages.macro.precision = fj.at("precision_macro").get<double>();
                f.averages.macro.recall = fj.at("recall_macro").get<double>();
                f.averages.macro.f1 = fj.at("f1_macro").get<double>();
                f.auc.macro = fj.at("auc_macro").get<double>();
                f.auc.micro = fj.at("auc_micro").get<double>();
                const auto num = [](const Json& v) {
                    if (v.is_string()) {
                        return v.get<std::string>() == "-inf"
                                   ? -std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::infinity();
                    }
                    return v.get<double>();
                };
                f.quality.psnr_mean = num(fj.at("psnr_mean"));
                f.quality.ssim_mean = fj.at("ssim_mean").get<double>();
                int t = 0;
                for (const auto& row : fj.at("confusion")) {
                    int p = 0;
                    for (const auto& v : row) {
                        f.confusion.at(t, p) = v.get<std::int64_t>();
                        ++p;
                    }
                    ++t;
                }
                r.folds.push_back(std::move(f));
            }
            // Self-consistency: stored aggregate must match the per-fold data.
            const ReportAggregate agg = aggregate_report(r);
            const double stored = j.at("aggregate").at("accuracy").at("mean").get<double>();
            if (std::abs(stored - agg.accuracy.mean) > 1e-9) {
                throw IoError("report for arm '" + r.arm +
                              "' is inconsistent: stored aggregate accuracy " +
                              std::to_string(stored) + " vs recomputed " +
                              std::to_string(agg.accuracy.mean));
            }
        } catch (const Json::exception& e) {
            throw IoError(std::string("report parse: ") + e.what());
        }
        return r;
    };
    const MetricsReport rb = parse_report(jb);
    const MetricsReport rp = parse_report(jp);
    std::ostringstream os;
    os << "run: " << run_dir.string() << "\n";
    os << "arms: " << rb.arm << " vs " << rp.arm << " (" << rb.folds.size() << " folds, per-side scoring)\n\n";
    os << comparison_to_table(compare_arms(rb, rp));
    return os.str();
}

}  // namespace cbctcad
