// cbctcad command-line front end: phantom synthesis, projection,
// reconstruction, denoiser/diagnosis training, per-volume diagnosis, and the
// two-arm experiment harness.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "cbctcad/denoise.hpp"
#include "cbctcad/diagnosis.hpp"
#include "cbctcad/errors.hpp"
#include "cbctcad/fdk.hpp"
#include "cbctcad/harness.hpp"
#include "cbctcad/io.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/phantom.hpp"
#include "cbctcad/projector.hpp"
#include "cbctcad/rng.hpp"

namespace fs = std::filesystem;
using namespace cbctcad;

namespace {

void print_exception_chain(const std::exception& e, int depth = 0) {
    std::cerr << (depth == 0 ? "error: " : "  caused by: ") << e.what() << "\n";
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& nested) {
        print_exception_chain(nested, depth + 1);
    } catch (...) {
        std::cerr << "  caused by: unknown exception\n";
    }
}

std::vector<TrainingPair> manifest_training_pairs(const fs::path& manifest_path,
                                                  int slices_per_case) {
    const Manifest manifest = read_manifest(manifest_path);
    if (manifest.entries.empty()) {
        throw std::invalid_argument("manifest has no cases: " + manifest_path.string());
    }
    const fs::path dir = manifest_path.parent_path();
    std::vector<TrainingPair> pairs;
    for (const auto& e : manifest.entries) {
        if (e.pcbct_stem.empty()) {
            throw std::invalid_argument("case " + e.id + " has no pcbct volume; run the "
                                        "experiment or reconstruct stage first");
        }
        const Volume clean = read_volume(dir / e.clean_stem);
        const Volume noisy = read_volume(dir / e.pcbct_stem);
        const int lo = e.key_slice_range[0], hi = e.key_slice_range[1];
        const int span = hi - lo + 1;
        for (int i = 0; i < slices_per_case; ++i) {
            int y = lo + static_cast<int>((static_cast<double>(span) * (i + 0.5)) /
                                          slices_per_case);
            y = std::min(hi, std::max(lo, y));
            pairs.push_back({coronal_slice(noisy, y), coronal_slice(clean, y)});
        }
    }
    return pairs;
}

Json diagnosis_to_json(const Diagnosis& d, const std::string& input_hash,
                       const std::string& model_path) {
    Json j;
    j["format"] = "cbctcad-diagnosis-v1";
    j["slice_interval"] = d.slice_interval;
    const char* side_names[2] = {"left", "right"};
    Json sides;
    for (int s = 0; s < 2; ++s) {
        Json probs;
        for (int k = 0; k < 3; ++k) {
            probs[label_name(static_cast<DiagnosisLabel>(k))] = d.sides[s].probabilities[k];
        }
        sides[side_names[s]] = {{"label", label_name(d.sides[s].label)},
                                {"probabilities", probs}};
    }
    j["sides"] = std::move(sides);
    j["provenance"] = {{"model", model_path}, {"input_hash", input_hash}};
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cone-beam CT simulation, denoising, and sinus diagnosis toolkit"};
    app.require_subcommand(1);

    // ---- phantom -----------------------------------------------------------
    auto* cmd_phantom = app.add_subcommand("phantom", "generate synthetic head phantoms");
    struct {
        std::uint64_t seed = 1;
        std::string left = "healthy", right = "healthy";
        std::vector<int> dims{64, 64, 64};
        double extent = 180.0;
        std::string out = "phantom";
        int dataset = 0;
        std::vector<int> counts{0, 0, 0};
    } ph;
    cmd_phantom->add_option("--seed", ph.seed, "rng seed");
    cmd_phantom->add_option("--left", ph.left, "left-side label (healthy|chronic|fungal_ball)");
    cmd_phantom->add_option("--right", ph.right, "right-side label");
    cmd_phantom->add_option("--dims", ph.dims, "voxels per axis (nx ny nz)")->expected(3);
    cmd_phantom->add_option("--extent-mm", ph.extent, "physical extent of the cube in mm");
    cmd_phantom->add_option("--out", ph.out, "output stem (single case) or directory (dataset)");
    cmd_phantom->add_option("--dataset", ph.dataset,
                            "generate a dataset of N cases instead of one case");
    cmd_phantom->add_option("--counts", ph.counts,
                            "per-side label counts for dataset mode (healthy chronic fungal)")
        ->expected(3);

    // ---- project -----------------------------------------------------------
    auto* cmd_project = app.add_subcommand("project", "cone-beam forward projection");
    struct {
        std::string volume, geometry, out = "projections";
    } pr;
    cmd_project->add_option("--volume", pr.volume, "input volume stem")->required();
    cmd_project->add_option("--geometry", pr.geometry, "geometry json (default geometry if omitted)");
    cmd_project->add_option("--out", pr.out, "output stem");

    // ---- reconstruct ---------------------------------------------------------
    auto* cmd_recon = app.add_subcommand("reconstruct", "FDK reconstruction from projections");
    struct {
        std::string projections, out = "recon";
        std::vector<int> dims{64, 64, 64};
        std::vector<double> spacing{2.8125, 2.8125, 2.8125};
        std::string window = "hann";
        bool parker = false;
    } rc;
    cmd_recon->add_option("--projections", rc.projections, "projection stem")->required();
    cmd_recon->add_option("--out", rc.out, "output volume stem");
    cmd_recon->add_option("--dims", rc.dims, "reconstruction grid")->expected(3);
    cmd_recon->add_option("--spacing-mm", rc.spacing, "voxel spacing in mm")->expected(3);
    cmd_recon->add_option("--window", rc.window, "filter window: ram-lak | hann");
    cmd_recon->add_flag("--parker", rc.parker, "Parker short-scan weighting");

    // ---- train-denoiser ------------------------------------------------------
    auto* cmd_tden = app.add_subcommand("train-denoiser", "train the slice denoiser");
    struct {
        std::string manifest, out = "denoiser.cbm";
        int epochs = 40, batch = 18, channels = 8, slices = 4;
        double lr = 1e-3;
        std::uint64_t seed = 7;
    } td;
    cmd_tden->add_option("--manifest", td.manifest, "dataset manifest json")->required();
    cmd_tden->add_option("--out", td.out, "output model file");
    cmd_tden->add_option("--epochs", td.epochs, "training epochs");
    cmd_tden->add_option("--batch", td.batch, "mini-batch size");
    cmd_tden->add_option("--lr", td.lr, "Adam learning rate");
    cmd_tden->add_option("--channels", td.channels, "conv channels per scale");
    cmd_tden->add_option("--slices-per-case", td.slices, "training slices sampled per case");
    cmd_tden->add_option("--seed", td.seed, "rng seed");

    // ---- denoise -------------------------------------------------------------
    auto* cmd_den = app.add_subcommand("denoise", "apply a trained denoiser to a volume");
    struct {
        std::string model, volume, out = "denoised";
    } dn;
    cmd_den->add_option("--model", dn.model, "denoiser model file")->required();
    cmd_den->add_option("--volume", dn.volume, "input volume stem")->required();
    cmd_den->add_option("--out", dn.out, "output volume stem");

    // ---- train-diagnosis -------------------------------------------------------
    auto* cmd_tdia = app.add_subcommand("train-diagnosis",
                                        "train key-slice selector and side classifier");
    struct {
        std::string manifest, denoiser, out = "diagnosis.cbm";
        int iterations = 400;
        double lr = 0.5, l2 = 1e-3;
    } tg;
    cmd_tdia->add_option("--manifest", tg.manifest, "dataset manifest json")->required();
    cmd_tdia->add_option("--denoiser", tg.denoiser,
                         "optional denoiser applied to volumes before training");
    cmd_tdia->add_option("--out", tg.out, "output model file");
    cmd_tdia->add_option("--iterations", tg.iterations, "gradient-descent iterations");
    cmd_tdia->add_option("--lr", tg.lr, "gradient-descent learning rate");
    cmd_tdia->add_option("--l2", tg.l2, "L2 regularization weight");

    // ---- diagnose --------------------------------------------------------------
    auto* cmd_dia = app.add_subcommand("diagnose", "two-stage diagnosis of one volume");
    struct {
        std::string model, volume, denoiser, out = "diagnosis.json", saliency;
    } dg;
    cmd_dia->add_option("--model", dg.model, "diagnosis model file")->required();
    cmd_dia->add_option("--volume", dg.volume, "input volume stem")->required();
    cmd_dia->add_option("--denoiser", dg.denoiser, "optional denoiser model applied first");
    cmd_dia->add_option("--out", dg.out, "output report json");
    cmd_dia->add_option("--saliency", dg.saliency,
                        "optional output stem for per-side occlusion saliency volumes");

    // ---- experiment --------------------------------------------------------------
    auto* cmd_exp = app.add_subcommand("experiment", "run the two-arm study end to end");
    struct {
        std::string config, out_dir;
    } ex;
    cmd_exp->add_option("--config", ex.config, "experiment config json (defaults if omitted)");
    cmd_exp->add_option("--out-dir", ex.out_dir, "override the config's output directory");

    // ---- report ---------------------------------------------------------------
    auto* cmd_rep = app.add_subcommand("report", "summarize a finished experiment run");
    struct {
        std::string dir;
    } rp;
    cmd_rep->add_option("--dir", rp.dir, "experiment output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (cmd_phantom->parsed()) {
            const std::array<int, 3> dims{ph.dims[0], ph.dims[1], ph.dims[2]};
            if (ph.dataset > 0) {
                DatasetSpec spec;
                spec.n_cases = ph.dataset;
                spec.side_counts = {ph.counts[0], ph.counts[1], ph.counts[2]};
                spec.dims = dims;
                spec.extent_mm = ph.extent;
                spec.seed = ph.seed;
                const auto cases = generate_dataset(spec);
                const fs::path dir = resolve_output_path(ph.out);
                Manifest manifest;
                manifest.extra = {{"dims", dims}, {"extent_mm", ph.extent}, {"seed", ph.seed}};
                for (const auto& c : cases) {
                    ManifestEntry e;
                    e.id = c.labeled.id;
                    e.seed = c.labeled.seed;
                    e.labels = {label_name(c.labeled.labels[0]),
                                label_name(c.labeled.labels[1])};
                    e.key_slice_range = c.labeled.key_slice_range;
                    e.clean_stem = c.labeled.id + "_clean";
                    manifest.entries.push_back(e);
                    write_volume(dir / e.clean_stem, c.labeled.volume);
                }
                write_manifest(dir / "manifest.json", manifest);
                std::cout << "wrote " << cases.size() << " cases to " << dir.string() << "\n";
            } else {
                const GeneratedCase c = generate_case(ph.seed, label_from_name(ph.left),
                                                      label_from_name(ph.right), dims,
                                                      ph.extent);
                const fs::path out = resolve_output_path(ph.out);
                write_volume(out, c.labeled.volume);
                Json meta;
                meta["seed"] = ph.seed;
                meta["labels"] = {{"left", ph.left}, {"right", ph.right}};
                meta["key_slice_range"] = c.labeled.key_slice_range;
                write_json_file(fs::path(out.string() + "_meta.json"), meta);
                std::cout << "wrote phantom " << out.string() << " (key slices "
                          << c.labeled.key_slice_range[0] << ".."
                          << c.labeled.key_slice_range[1] << ")\n";
            }
        } else if (cmd_project->parsed()) {
            const Volume vol = read_volume(pr.volume);
            const ConeBeamGeometry geom =
                pr.geometry.empty() ? make_default_geometry() : read_geometry(pr.geometry);
            const ProjectionSet set = forward_project(vol, geom);
            const fs::path out = resolve_output_path(pr.out);
            write_projections(out, set);
            std::cout << "wrote " << set.views.size() << " views to " << out.string() << "\n";
        } else if (cmd_recon->parsed()) {
            const ProjectionSet set = read_projections(rc.projections);
            FdkOptions opt;
            opt.dims = {rc.dims[0], rc.dims[1], rc.dims[2]};
            opt.spacing_mm = {rc.spacing[0], rc.spacing[1], rc.spacing[2]};
            opt.window = filter_window_from_name(rc.window);
            opt.parker = rc.parker;
            const Volume vol = fdk_reconstruct(set, opt);
            const fs::path out = resolve_output_path(rc.out);
            write_volume(out, vol);
            std::cout << "wrote reconstruction " << out.string() << "\n";
        } else if (cmd_tden->parsed()) {
            const auto pairs = manifest_training_pairs(td.manifest, td.slices);
            ConvDenoiserConfig cfg;
            cfg.channels = td.channels;
            cfg.epochs = td.epochs;
            cfg.batch_size = td.batch;
            cfg.learning_rate = td.lr;
            cfg.seed = td.seed;
            const auto result = train_denoiser(pairs, cfg);
            const fs::path out = resolve_output_path(td.out);
            save_denoiser(out, Denoiser::learned(result.model));
            std::cout << "trained on " << pairs.size() << " slice pairs; final loss "
                      << result.history.back().mean_loss << "; wrote " << out.string() << "\n";
        } else if (cmd_den->parsed()) {
            const Denoiser den = load_denoiser(dn.model);
            const Volume vol = read_volume(dn.volume);
            const fs::path out = resolve_output_path(dn.out);
            write_volume(out, den.denoise_volume(vol));
            std::cout << "wrote denoised volume " << out.string() << "\n";
        } else if (cmd_tdia->parsed()) {
            const Manifest manifest = read_manifest(tg.manifest);
            const fs::path dir = fs::path(tg.manifest).parent_path();
            Denoiser den = Denoiser::identity();
            if (!tg.denoiser.empty()) den = load_denoiser(tg.denoiser);
            std::vector<Volume> volumes;
            volumes.reserve(manifest.entries.size());
            std::vector<SelectorCase> sel_cases;
            std::vector<Volume> sides;
            sides.reserve(manifest.entries.size() * 2);
            std::vector<SideSample> side_samples;
            for (const auto& e : manifest.entries) {
                const std::string stem = e.pcbct_stem.empty() ? e.clean_stem : e.pcbct_stem;
                volumes.push_back(den.denoise_volume(read_volume(dir / stem)));
            }
            for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
                const auto& e = manifest.entries[i];
                sel_cases.push_back({&volumes[i], e.key_slice_range});
                auto [left, right] = split_sides(extract_substack(volumes[i],
                                                                  e.key_slice_range));
                sides.push_back(std::move(left));
                side_samples.push_back({&sides.back(), label_from_name(e.labels[0])});
                sides.push_back(std::move(right));
                side_samples.push_back({&sides.back(), label_from_name(e.labels[1])});
            }
            SelectorTrainConfig sel_cfg;
            sel_cfg.gd = {tg.iterations, tg.lr, tg.l2};
            SideClassifierConfig cls_cfg;
            cls_cfg.gd = {tg.iterations, tg.lr, tg.l2};
            DiagnosisModel model;
            model.selector = train_key_slice_selector(sel_cases, sel_cfg);
            model.classifier = train_side_classifier(side_samples, cls_cfg);
            const fs::path out = resolve_output_path(tg.out);
            save_diagnosis_model(out, model);
            std::cout << "trained diagnosis model on " << manifest.entries.size()
                      << " cases; wrote " << out.string() << "\n";
        } else if (cmd_dia->parsed()) {
            const DiagnosisModel model = load_diagnosis_model(dg.model);
            Volume vol = read_volume(dg.volume);
            if (!dg.denoiser.empty()) {
                vol = load_denoiser(dg.denoiser).denoise_volume(vol);
            }
            const Diagnosis d = diagnose(model.selector, model.classifier, vol);
            const fs::path out = resolve_output_path(dg.out);
            write_json_file(out, diagnosis_to_json(d, hash_volume_hex(vol), dg.model));
            if (!dg.saliency.empty()) {
                const Volume sub = extract_substack(vol, d.slice_interval);
                auto [left, right] = split_sides(sub);
                const fs::path sal = resolve_output_path(dg.saliency);
                const int patch = std::max(2, std::min({left.dims[0], left.dims[1],
                                                        left.dims[2], 8}));
                write_volume(fs::path(sal.string() + "_left"),
                             occlusion_saliency(model.classifier, left, patch,
                                                std::max(1, patch / 2)));
                write_volume(fs::path(sal.string() + "_right"),
                             occlusion_saliency(model.classifier, right, patch,
                                                std::max(1, patch / 2)));
            }
            std::cout << "left: " << label_name(d.sides[0].label)
                      << ", right: " << label_name(d.sides[1].label) << " (slices "
                      << d.slice_interval[0] << ".." << d.slice_interval[1] << "); wrote "
                      << out.string() << "\n";
        } else if (cmd_exp->parsed()) {
            ExperimentConfig cfg;
            if (!ex.config.empty()) {
                cfg = experiment_config_from_json(read_json_file(ex.config));
            }
            if (!ex.out_dir.empty()) cfg.out_dir = ex.out_dir;
            const ExperimentResult result = run_experiment(cfg);
            std::cout << comparison_to_table(result.comparison);
            std::cout << "artifacts: " << result.out_dir.string() << "\n";
        } else if (cmd_rep->parsed()) {
            std::cout << render_run_summary(rp.dir);
        }
    } catch (const std::exception& e) {
        print_exception_chain(e);
        return 2;
    }
    return 0;
}
