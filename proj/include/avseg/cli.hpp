// cli.hpp - command-line entry point. Results go to stdout, diagnostics
// to stderr; exit 0 on success, 1 on validation failure, 2 on internal
// error.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avseg/gradcheck.hpp"
#include "avseg/io.hpp"
#include "avseg/manifest.hpp"
#include "avseg/matching.hpp"
#include "avseg/metrics.hpp"
#include "avseg/synth.hpp"

namespace avseg::cli {

namespace detail {

inline ExperimentConfig config_or_default(const std::string& path) {
    if (path.empty()) {
        ExperimentConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_run_config(path);
}

inline void require_same_categories(int pred_k, int gt_k) {
    if (pred_k != gt_k)
        throw ValidationError("manifests disagree on the category count (" +
                              std::to_string(pred_k) + " vs " + std::to_string(gt_k) + ")");
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    int instances = 20;
    int grid = 6;
    int queries = 4;
    int categories = 3;
    int gts = 2;
    double tolerance = 1e-4;
};

inline int run_gradcheck(const GradcheckArgs& a) {
    GradCheckSpec spec;
    spec.seed = a.seed;
    spec.instances = a.instances;
    spec.shape = MaskShape{a.grid, a.grid};
    spec.queries = a.queries;
    spec.categories = a.categories;
    spec.gt_count = a.gts;
    if (spec.gt_count > spec.queries)
        throw ValidationError("gradcheck: --gts must not exceed --queries");
    if (spec.gt_count > spec.categories)
        throw ValidationError("gradcheck: --gts must not exceed --categories");
    const std::vector<GradCheckResult> results = gradient_check(spec);
    bool ok = true;
    for (const GradCheckResult& r : results) {
        std::printf("%-24s max_rel_error=%.3e entries=%ld\n", r.name.c_str(), r.max_rel_error,
                    r.entries);
        ok = ok && r.max_rel_error < a.tolerance;
    }
    std::printf("gradcheck %s (tolerance %.1e)\n", ok ? "passed" : "FAILED", a.tolerance);
    return ok ? 0 : 1;
}

struct MatchArgs {
    std::string pred_path, gt_path, config_path, json_path;
};

inline int run_match(const MatchArgs& a) {
    const ExperimentConfig cfg = config_or_default(a.config_path);
    const PredictionManifest preds = load_prediction_manifest(a.pred_path);
    const GroundTruthManifest gts = load_ground_truth_manifest(a.gt_path);
    require_same_categories(preds.categories, gts.categories);
    const CostWeights cw = CostWeights::from(cfg.weights);
    const MatchingIndex idx = match(preds.entries, gts.entries, cw);
    const double total = total_cost(idx, preds.entries, gts.entries, cw);
    std::printf("pairs: %zu\n", idx.pairs.size());
    for (auto [g, p] : idx.pairs)
        std::printf("gt %d -> prediction %d   cost %.9f\n", g, p,
                    pair_cost(preds.entries[p], gts.entries[g], cw));
    std::printf("unmatched:");
    for (int u : idx.unmatched) std::printf(" %d", u);
    std::printf("\ntotal_cost: %.9f\n", total);
    if (!a.json_path.empty()) jsonio::save(a.json_path, matching_to_json(idx, total));
    return 0;
}

struct LossArgs {
    std::string pred_path, gt_path, config_path, json_path, grad_dir;
};

inline int run_loss(const LossArgs& a) {
    const ExperimentConfig cfg = config_or_default(a.config_path);
    const PredictionManifest preds = load_prediction_manifest(a.pred_path);
    const GroundTruthManifest gts = load_ground_truth_manifest(a.gt_path);
    require_same_categories(preds.categories, gts.categories);
    const MatchingIndex idx = match(preds.entries, gts.entries, CostWeights::from(cfg.weights));
    const SegmentationLoss loss = segmentation_loss(preds.entries, gts.entries, idx, cfg.weights);
    std::printf("mask_cls: %.9f\n", loss.mask_cls_value);
    std::printf("soas: %.9f\n", loss.soas_value);
    std::printf("lambda_soas: %g\n", cfg.weights.lambda_soas);
    std::printf("total: %.9f\n", loss.value);
    if (loss.no_foreground) std::printf("note: no foreground; soas term skipped\n");
    if (!a.json_path.empty()) {
        Json j;
        j["mask_cls"] = loss.mask_cls_value;
        j["soas"] = loss.soas_value;
        j["lambda_soas"] = cfg.weights.lambda_soas;
        j["total"] = loss.value;
        jsonio::save(a.json_path, j);
    }
    if (!a.grad_dir.empty()) {
        std::filesystem::create_directories(a.grad_dir);
        Json class_grads = Json::array();
        for (std::size_t i = 0; i < preds.entries.size(); ++i) {
            char name[48];
            std::snprintf(name, sizeof(name), "q_%03zu_mask_logit_grad.sasl", i);
            write_sasl((std::filesystem::path(a.grad_dir) / name).string(),
                       preds.entries[i].mask.shape, loss.mask_logit_grads[i]);
            class_grads.push_back(loss.class_logit_grads[i]);
        }
        jsonio::save((std::filesystem::path(a.grad_dir) / "class_logit_grads.json").string(),
                     class_grads);
        std::printf("gradients written to %s\n", a.grad_dir.c_str());
    }
    return 0;
}

struct InferArgs {
    std::string checkpoint_path, embedding_path, pred_path, config_path;
    std::string out_map, out_mask;
    double mask_threshold = -1.0;      // <0: take from config
    double decision_threshold = -1.0;  // <0: take from config
};

inline int run_infer(const InferArgs& a) {
    const ExperimentConfig cfg = config_or_default(a.config_path);
    const ToyModel model = read_checkpoint(a.checkpoint_path);
    const AudioEmbedding emb = load_embedding(a.embedding_path);
    std::vector<InstancePrediction> preds;
    if (a.pred_path.empty()) {
        preds = model.predictions();
    } else {
        PredictionManifest m = load_prediction_manifest(a.pred_path);
        if (m.categories != model.categories)
            throw ValidationError("prediction manifest categories do not match the checkpoint");
        preds = std::move(m.entries);
    }
    const double mt = a.mask_threshold > 0 ? a.mask_threshold : cfg.mask_threshold;
    const double dt = a.decision_threshold > 0 ? a.decision_threshold : cfg.decision_threshold;
    const InferenceResult res = infer(preds, model.head, emb, mt, dt);
    write_sasl(a.out_map, res.map);
    write_pgm(a.out_mask, res.mask);
    std::printf("map: %s\nmask: %s\nsegmented_pixels: %ld\n", a.out_map.c_str(), a.out_mask.c_str(),
                area(res.mask));
    return 0;
}

struct EvalArgs {
    std::string pred_dir, gt_dir, json_path;
    double beta2 = 0.3;
    std::vector<double> thresholds;
};

inline void print_report(const DatasetReport& r) {
    std::printf("frames: %ld\n", r.frame_count);
    std::printf("mean_jaccard: %.6f\n", r.mean_jaccard);
    std::printf("mean_fscore: %.6f\n", r.mean_fscore);
    std::printf("micro_jaccard: %.6f\n", r.micro_jaccard);
    std::printf("micro_fscore: %.6f\n", r.micro_fscore);
    if (r.silent_miou)
        std::printf("silent_miou: %.6f\n", *r.silent_miou);
    else
        std::printf("silent_miou: n/a\n");
    if (r.recognition_accuracy)
        std::printf("recognition_accuracy: %.6f\n", *r.recognition_accuracy);
    else
        std::printf("recognition_accuracy: n/a\n");
}

inline int run_eval(const EvalArgs& a) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(a.gt_dir)) throw ValidationError("not a directory: " + a.gt_dir);
    if (!fs::is_directory(a.pred_dir)) throw ValidationError("not a directory: " + a.pred_dir);
    std::map<std::string, fs::path> gt_files;
    for (const auto& e : fs::directory_iterator(a.gt_dir))
        if (e.path().extension() == ".pgm") gt_files[e.path().stem().string()] = e.path();
    if (gt_files.empty()) throw ValidationError("no .pgm ground-truth masks in " + a.gt_dir);
    std::map<std::string, fs::path> pred_files;
    int n_pgm = 0, n_sasl = 0;
    for (const auto& e : fs::directory_iterator(a.pred_dir)) {
        if (e.path().extension() == ".pgm") {
            pred_files[e.path().stem().string()] = e.path();
            ++n_pgm;
        } else if (e.path().extension() == ".sasl") {
            pred_files[e.path().stem().string()] = e.path();
            ++n_sasl;
        }
    }
    if (n_pgm > 0 && n_sasl > 0)
        throw ValidationError("prediction directory mixes .pgm and .sasl files");
    if (pred_files.empty())
        throw ValidationError("no .pgm or .sasl predictions in " + a.pred_dir);
    for (const auto& [stem, path] : gt_files)
        if (!pred_files.count(stem))
            throw ValidationError("no prediction for ground truth frame \"" + stem + "\"");
    for (const auto& [stem, path] : pred_files)
        if (!gt_files.count(stem))
            throw ValidationError("no ground truth for prediction frame \"" + stem + "\"");

    std::vector<BinaryMask> gts;
    gts.reserve(gt_files.size());
    for (const auto& [stem, path] : gt_files) gts.push_back(read_pgm(path.string()));

    Json out;
    if (n_sasl > 0) {
        std::vector<SoftMask> maps;
        for (const auto& [stem, path] : gt_files)
            maps.push_back(read_sasl_soft_mask(pred_files.at(stem).string()));
        std::vector<double> thresholds = a.thresholds;
        if (thresholds.empty()) thresholds = {0.5, 0.6, 0.7, 0.8, 0.9};
        out["sweep"] = Json::array();
        for (double t : thresholds) {
            std::vector<std::pair<BinaryMask, BinaryMask>> frames;
            for (std::size_t f = 0; f < maps.size(); ++f)
                frames.emplace_back(binarize(maps[f], t), gts[f]);
            const DatasetReport rep = dataset_eval(frames, a.beta2);
            std::printf("--- threshold %.2f ---\n", t);
            print_report(rep);
            Json entry = dataset_report_to_json(rep);
            entry["threshold"] = t;
            out["sweep"].push_back(entry);
        }
    } else {
        std::vector<std::pair<BinaryMask, BinaryMask>> frames;
        std::size_t f = 0;
        for (const auto& [stem, path] : pred_files)
            frames.emplace_back(read_pgm(path.string()), gts[f++]);
        const DatasetReport rep = dataset_eval(frames, a.beta2);
        print_report(rep);
        out = dataset_report_to_json(rep);
    }
    if (!a.json_path.empty()) jsonio::save(a.json_path, out);
    return 0;
}

struct SynthGenArgs {
    std::string config_path, out_dir;
};

inline int run_synth_gen(const SynthGenArgs& a) {
    namespace fs = std::filesystem;
    const ExperimentConfig cfg = config_or_default(a.config_path);
    const std::vector<SyntheticSample> all =
        generate(cfg.scene, cfg.train_samples + cfg.test_samples);
    fs::create_directories(a.out_dir);
    Json index;
    index["config"] = run_config_to_json(cfg);
    index["samples"] = Json::array();
    for (int i = 0; i < static_cast<int>(all.size()); ++i) {
        const bool is_train = i < cfg.train_samples;
        const int local = is_train ? i : i - cfg.train_samples;
        char name[48];
        std::snprintf(name, sizeof(name), "%s/sample_%04d", is_train ? "train" : "test", local);
        const fs::path dir = fs::path(a.out_dir) / name;
        fs::create_directories(dir);
        write_ground_truth(dir.string(), cfg.scene.categories, all[i].gts);
        write_pgm((dir / "union.pgm").string(), all[i].gt_union);
        save_embedding((dir / "embedding.json").string(), all[i].audio_embedding);
        index["samples"].push_back({{"path", name},
                                    {"split", is_train ? "train" : "test"},
                                    {"sounding_categories", all[i].sounding_categories}});
    }
    jsonio::save((fs::path(a.out_dir) / "dataset.json").string(), index);
    std::printf("wrote %zu samples to %s\n", all.size(), a.out_dir.c_str());
    return 0;
}

struct TrainArgs {
    std::string config_path, checkpoint_path, trace_path, eval_json, emit_preds;
};

inline int run_train(const TrainArgs& a) {
    const ExperimentConfig cfg = config_or_default(a.config_path);
    const ExperimentResult res = run_experiment(cfg);
    if (!a.checkpoint_path.empty()) write_checkpoint(a.checkpoint_path, res.model);
    if (!a.trace_path.empty())
        jsonio::save(a.trace_path, trace_to_json(res.stage1_trace, res.stage2_trace));
    if (!a.emit_preds.empty())
        write_predictions(a.emit_preds, cfg.scene.categories, res.model.predictions());
    if (!a.eval_json.empty()) {
        Json j = dataset_report_to_json(res.eval.report);
        j["sounding_prob_gap"] = res.eval.sounding_prob_gap;
        j["instances"] = res.eval.instance_count;
        jsonio::save(a.eval_json, j);
    }
    if (!res.stage1_trace.empty())
        std::printf("stage1 final loss: %.6f\n", res.stage1_trace.back().total);
    if (!res.stage2_trace.empty())
        std::printf("stage2 final loss: %.6f\n", res.stage2_trace.back().avc);
    print_report(res.eval.report);
    std::printf("sounding_prob_gap: %.6f\ninstances: %ld\n", res.eval.sounding_prob_gap,
                res.eval.instance_count);
    return 0;
}

struct AblateArgs {
    std::string config_path, study, json_path;
};

inline int run_ablate(const AblateArgs& a) {
    const ExperimentConfig cfg = config_or_default(a.config_path);
    AblationStudy study;
    if (a.study == "soas")
        study = AblationStudy::Soas;
    else if (a.study == "avsc")
        study = AblationStudy::Avsc;
    else
        throw ValidationError("unknown study '" + a.study + "' (expected soas or avsc)");
    const AblationReport rep = ablate(cfg, study);
    std::printf("%-20s %10s %10s %10s\n", "arm", "mean_j", "mean_f", "instances");
    for (const AblationArm& arm : rep.arms)
        std::printf("%-20s %10.6f %10.6f %10ld\n", arm.name.c_str(), arm.mean_jaccard,
                    arm.mean_fscore, arm.instance_count);
    if (!a.json_path.empty()) jsonio::save(a.json_path, ablation_to_json(rep));
    return 0;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
    CLI::App app{"instance-aware audio-visual segmentation toolkit"};
    app.require_subcommand(1);

    detail::GradcheckArgs gc;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "verify analytic gradients against central finite differences");
    gradcheck->add_option("--seed", gc.seed, "base seed");
    gradcheck->add_option("--instances", gc.instances, "number of random instances")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--grid", gc.grid, "mask side length")->check(CLI::PositiveNumber);
    gradcheck->add_option("--queries", gc.queries, "prediction count")->check(CLI::PositiveNumber);
    gradcheck->add_option("--categories", gc.categories, "category count")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--gts", gc.gts, "ground-truth count")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", gc.tolerance, "max relative error allowed");

    detail::MatchArgs ma;
    CLI::App* matchc =
        app.add_subcommand("match", "match predictions to ground truths and print the assignment");
    matchc->add_option("--pred", ma.pred_path, "prediction manifest")->required();
    matchc->add_option("--gt", ma.gt_path, "ground-truth manifest")->required();
    matchc->add_option("--config", ma.config_path, "run config for the cost weights");
    matchc->add_option("--json", ma.json_path, "write the matching as JSON");

    detail::LossArgs la;
    CLI::App* lossc = app.add_subcommand("loss", "evaluate the training losses for a scene");
    lossc->add_option("--pred", la.pred_path, "prediction manifest")->required();
    lossc->add_option("--gt", la.gt_path, "ground-truth manifest")->required();
    lossc->add_option("--config", la.config_path, "run config for the loss weights");
    lossc->add_option("--json", la.json_path, "write the loss terms as JSON");
    lossc->add_option("--grad-dir", la.grad_dir, "dump gradients (SASL + JSON) into this directory");

    detail::InferArgs ia;
    CLI::App* inferc = app.add_subcommand("infer", "run the audio-visual pipeline on one frame");
    inferc->add_option("--checkpoint", ia.checkpoint_path, "model checkpoint (AVSM)")->required();
    inferc->add_option("--embedding", ia.embedding_path, "audio embedding (JSON array)")->required();
    inferc->add_option("--pred", ia.pred_path,
                       "prediction manifest (defaults to the checkpoint's own queries)");
    inferc->add_option("--config", ia.config_path, "run config for thresholds");
    inferc->add_option("--mask-threshold", ia.mask_threshold, "instance binarization threshold");
    inferc->add_option("--decision-threshold", ia.decision_threshold, "final mask threshold");
    inferc->add_option("--out-map", ia.out_map, "output localization map (SASL)")->required();
    inferc->add_option("--out-mask", ia.out_mask, "output mask (PGM)")->required();

    detail::EvalArgs ea;
    CLI::App* evalc = app.add_subcommand("eval", "score predicted masks against ground truth");
    evalc->add_option("--pred", ea.pred_dir, "directory of predicted masks (.pgm or .sasl)")
        ->required();
    evalc->add_option("--gt", ea.gt_dir, "directory of ground-truth masks (.pgm)")->required();
    evalc->add_option("--beta2", ea.beta2, "F-score beta^2");
    evalc->add_option("--thresholds", ea.thresholds,
                      "binarization thresholds for soft-map sweeps")
        ->delimiter(',');
    evalc->add_option("--json", ea.json_path, "write the report as JSON");

    detail::SynthGenArgs sa;
    CLI::App* synthc = app.add_subcommand("synth-gen", "materialize a synthetic dataset");
    synthc->add_option("--config", sa.config_path, "run config");
    synthc->add_option("--out", sa.out_dir, "output directory")->required();

    detail::TrainArgs ta;
    CLI::App* trainc = app.add_subcommand("train", "run the two-stage toy trainer");
    trainc->add_option("--config", ta.config_path, "run config");
    trainc->add_option("--checkpoint", ta.checkpoint_path, "write the trained model (AVSM)");
    trainc->add_option("--trace", ta.trace_path, "write the per-step loss trace (JSON)");
    trainc->add_option("--eval-json", ta.eval_json, "write the test-split report (JSON)");
    trainc->add_option("--emit-preds", ta.emit_preds,
                       "write the trained queries as a prediction manifest");

    detail::AblateArgs aa;
    CLI::App* ablatec = app.add_subcommand("ablate", "train and compare ablation variants");
    ablatec->add_option("--config", aa.config_path, "run config");
    ablatec->add_option("--study", aa.study, "which component to ablate: soas or avsc")->required();
    ablatec->add_option("--json", aa.json_path, "write the comparison as JSON");

    try {
        app.parse(argc, argv);
        if (gradcheck->parsed()) return detail::run_gradcheck(gc);
        if (matchc->parsed()) return detail::run_match(ma);
        if (lossc->parsed()) return detail::run_loss(la);
        if (inferc->parsed()) return detail::run_infer(ia);
        if (evalc->parsed()) return detail::run_eval(ea);
        if (synthc->parsed()) return detail::run_synth_gen(sa);
        if (trainc->parsed()) return detail::run_train(ta);
        if (ablatec->parsed()) return detail::run_ablate(aa);
        std::cerr << app.help();
        return 1;
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}

/// Convenience overload for tests.
inline int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("avseg");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace avseg::cli
