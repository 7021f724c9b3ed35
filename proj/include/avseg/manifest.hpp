// manifest.hpp - the JSON document formats: prediction and ground-truth
// manifests, the run configuration, audio embedding files, and report
// serialization. Parsing is strict: unknown keys are rejected and every
// error names the offending field.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avseg/instance.hpp"
#include "avseg/io.hpp"
#include "avseg/matching.hpp"
#include "avseg/metrics.hpp"
#include "avseg/synth.hpp"

namespace avseg {

using Json = nlohmann::ordered_json;

namespace jsonio {

inline Json load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError(path + ": malformed JSON: " + e.what());
    }
}

inline void save(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw ValidationError("short write: " + path);
}

inline void require_object(const Json& j, const std::string& ctx) {
    if (!j.is_object()) throw ValidationError(ctx + ": expected a JSON object");
}

inline void reject_unknown(const Json& j, const std::vector<std::string>& allowed,
                           const std::string& ctx) {
    require_object(j, ctx);
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const std::string& k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ValidationError(ctx + ": unknown key \"" + item.key() + "\"");
    }
}

inline double get_number(const Json& j, const std::string& key, double fallback,
                         const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ValidationError(ctx + "." + key + ": expected a number");
    return j[key].get<double>();
}

inline long get_integer(const Json& j, const std::string& key, long fallback,
                        const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) throw ValidationError(ctx + "." + key + ": expected an integer");
    return j[key].get<long>();
}

inline bool get_bool(const Json& j, const std::string& key, bool fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_boolean()) throw ValidationError(ctx + "." + key + ": expected a boolean");
    return j[key].get<bool>();
}

inline std::string get_string(const Json& j, const std::string& key, const std::string& fallback,
                              const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw ValidationError(ctx + "." + key + ": expected a string");
    return j[key].get<std::string>();
}

}  // namespace jsonio

// ---------------------------------------------------------------------------
// Audio embedding files: a bare JSON array of numbers.
// ---------------------------------------------------------------------------

inline AudioEmbedding load_embedding(const std::string& path) {
    const Json j = jsonio::load(path);
    if (!j.is_array()) throw ValidationError(path + ": expected a JSON array of numbers");
    AudioEmbedding e;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw ValidationError(path + ": entry " + std::to_string(i) + " is not a number");
        const double v = j[i].get<double>();
        if (!std::isfinite(v))
            throw ValidationError(path + ": entry " + std::to_string(i) + " is not finite");
        e.push_back(v);
    }
    if (e.empty()) throw ValidationError(path + ": empty embedding");
    return e;
}

inline void save_embedding(const std::string& path, const AudioEmbedding& e) {
    jsonio::save(path, Json(e));
}

// ---------------------------------------------------------------------------
// Manifests. Mask paths are stored relative to the manifest file.
// ---------------------------------------------------------------------------

struct PredictionManifest {
    int categories = 0;  // K
    std::vector<InstancePrediction> entries;
    std::vector<std::string> mask_paths;
};

struct GroundTruthManifest {
    int categories = 0;
    std::vector<GroundTruthSegment> entries;
    std::vector<std::string> mask_paths;
};

namespace detail {

inline std::string resolve_relative(const std::string& manifest_path, const std::string& rel) {
    const std::filesystem::path p(rel);
    if (p.is_absolute()) return rel;
    return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace detail

inline PredictionManifest load_prediction_manifest(const std::string& path) {
    const Json j = jsonio::load(path);
    jsonio::reject_unknown(j, {"kind", "categories", "entries"}, path);
    if (jsonio::get_string(j, "kind", "", path) != "predictions")
        throw ValidationError(path + ": kind must be \"predictions\"");
    PredictionManifest m;
    m.categories = static_cast<int>(jsonio::get_integer(j, "categories", -1, path));
    if (m.categories < 1) throw ValidationError(path + ": categories must be a positive integer");
    if (!j.contains("entries") || !j["entries"].is_array())
        throw ValidationError(path + ": entries must be an array");
    MaskShape shape{0, 0};
    for (std::size_t i = 0; i < j["entries"].size(); ++i) {
        const std::string ctx = path + ": entry " + std::to_string(i);
        const Json& e = j["entries"][i];
        jsonio::reject_unknown(e, {"class_scores", "mask"}, ctx);
        if (!e.contains("class_scores") || !e["class_scores"].is_array())
            throw ValidationError(ctx + ": class_scores must be an array");
        InstancePrediction pred;
        for (const auto& v : e["class_scores"]) {
            if (!v.is_number()) throw ValidationError(ctx + ": class_scores must hold numbers");
            pred.scores.probs.push_back(v.get<double>());
        }
        if (static_cast<int>(pred.scores.probs.size()) != m.categories + 1)
            throw ValidationError(ctx + ": class_scores must have K+1 = " +
                                  std::to_string(m.categories + 1) + " entries");
        require_simplex(pred.scores, ctx.c_str());
        const std::string rel = jsonio::get_string(e, "mask", "", ctx);
        if (rel.empty()) throw ValidationError(ctx + ": missing mask path");
        const std::string full = detail::resolve_relative(path, rel);
        if (!std::filesystem::exists(full))
            throw ValidationError(ctx + ": missing mask file " + full);
        pred.mask = read_sasl_soft_mask(full);
        if (shape.pixel_count() == 0)
            shape = pred.mask.shape;
        else
            require_same_shape(shape, pred.mask.shape, ctx.c_str());
        m.entries.push_back(std::move(pred));
        m.mask_paths.push_back(rel);
    }
    return m;
}

inline GroundTruthManifest load_ground_truth_manifest(const std::string& path) {
    const Json j = jsonio::load(path);
    jsonio::reject_unknown(j, {"kind", "categories", "entries"}, path);
    if (jsonio::get_string(j, "kind", "", path) != "ground_truth")
        throw ValidationError(path + ": kind must be \"ground_truth\"");
    GroundTruthManifest m;
    m.categories = static_cast<int>(jsonio::get_integer(j, "categories", -1, path));
    if (m.categories < 1) throw ValidationError(path + ": categories must be a positive integer");
    if (!j.contains("entries") || !j["entries"].is_array())
        throw ValidationError(path + ": entries must be an array");
    MaskShape shape{0, 0};
    for (std::size_t i = 0; i < j["entries"].size(); ++i) {
        const std::string ctx = path + ": entry " + std::to_string(i);
        const Json& e = j["entries"][i];
        jsonio::reject_unknown(e, {"category", "mask"}, ctx);
        GroundTruthSegment seg;
        seg.category = static_cast<int>(jsonio::get_integer(e, "category", -1, ctx));
        if (seg.category < 0 || seg.category >= m.categories)
            throw ValidationError(ctx + ": category " + std::to_string(seg.category) +
                                  " outside [0, " + std::to_string(m.categories) + ")");
        const std::string rel = jsonio::get_string(e, "mask", "", ctx);
        if (rel.empty()) throw ValidationError(ctx + ": missing mask path");
        const std::string full = detail::resolve_relative(path, rel);
        if (!std::filesystem::exists(full))
            throw ValidationError(ctx + ": missing mask file " + full);
        seg.mask = read_pgm(full);
        if (area(seg.mask) == 0) throw ValidationError(ctx + ": ground-truth mask is empty");
        if (shape.pixel_count() == 0)
            shape = seg.mask.shape;
        else
            require_same_shape(shape, seg.mask.shape, ctx.c_str());
        m.entries.push_back(std::move(seg));
        m.mask_paths.push_back(rel);
    }
    return m;
}

/// Writes predictions as a manifest plus one SASL mask per entry.
inline std::string write_predictions(const std::string& dir, int categories,
                                     const std::vector<InstancePrediction>& preds) {
    std::filesystem::create_directories(dir);
    Json j;
    j["kind"] = "predictions";
    j["categories"] = categories;
    j["entries"] = Json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "q_%03zu.sasl", i);
        write_sasl((std::filesystem::path(dir) / name).string(), preds[i].mask.shape,
                   preds[i].mask.pixels);
        Json e;
        e["class_scores"] = preds[i].scores.probs;
        e["mask"] = name;
        j["entries"].push_back(e);
    }
    const std::string path = (std::filesystem::path(dir) / "predictions.json").string();
    jsonio::save(path, j);
    return path;
}

/// Writes ground truths as a manifest plus one PGM mask per entry.
inline std::string write_ground_truth(const std::string& dir, int categories,
                                      const std::vector<GroundTruthSegment>& gts) {
    std::filesystem::create_directories(dir);
    Json j;
    j["kind"] = "ground_truth";
    j["categories"] = categories;
    j["entries"] = Json::array();
    for (std::size_t i = 0; i < gts.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "gt_%03zu.pgm", i);
        write_pgm((std::filesystem::path(dir) / name).string(), gts[i].mask);
        Json e;
        e["category"] = gts[i].category;
        e["mask"] = name;
        j["entries"].push_back(e);
    }
    const std::string path = (std::filesystem::path(dir) / "ground_truth.json").string();
    jsonio::save(path, j);
    return path;
}

// ---------------------------------------------------------------------------
// Run configuration. Missing keys fall back to the shipped defaults;
// unknown keys are rejected everywhere.
// ---------------------------------------------------------------------------

inline ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "rectangle") return ShapeKind::Rectangle;
    if (s == "ellipse") return ShapeKind::Ellipse;
    throw ValidationError("unknown shape kind '" + s + "' (expected rectangle or ellipse)");
}

inline std::string to_string(ShapeKind k) {
    return k == ShapeKind::Rectangle ? "rectangle" : "ellipse";
}

inline ExperimentConfig parse_run_config(const Json& j, const std::string& ctx) {
    jsonio::reject_unknown(
        j, {"seed", "audio_mode", "weights", "thresholds", "scene", "model", "optimizer", "samples"},
        ctx);
    ExperimentConfig cfg;
    const long seed = jsonio::get_integer(j, "seed", 0, ctx);
    if (seed < 0) throw ValidationError(ctx + ".seed: must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.audio_mode = audio_mode_from_string(jsonio::get_string(j, "audio_mode", "independent", ctx));
    if (j.contains("weights")) {
        const Json& w = j["weights"];
        const std::string c = ctx + ".weights";
        jsonio::reject_unknown(w,
                               {"lambda_focal", "lambda_dice", "lambda_soas", "no_object_weight",
                                "focal_gamma", "focal_alpha", "epsilon"},
                               c);
        cfg.weights.lambda_focal = jsonio::get_number(w, "lambda_focal", cfg.weights.lambda_focal, c);
        cfg.weights.lambda_dice = jsonio::get_number(w, "lambda_dice", cfg.weights.lambda_dice, c);
        cfg.weights.lambda_soas = jsonio::get_number(w, "lambda_soas", cfg.weights.lambda_soas, c);
        cfg.weights.no_object_weight =
            jsonio::get_number(w, "no_object_weight", cfg.weights.no_object_weight, c);
        cfg.weights.focal_gamma = jsonio::get_number(w, "focal_gamma", cfg.weights.focal_gamma, c);
        cfg.weights.focal_alpha = jsonio::get_number(w, "focal_alpha", cfg.weights.focal_alpha, c);
        cfg.weights.epsilon = jsonio::get_number(w, "epsilon", cfg.weights.epsilon, c);
    }
    if (j.contains("thresholds")) {
        const Json& t = j["thresholds"];
        const std::string c = ctx + ".thresholds";
        jsonio::reject_unknown(t, {"mask", "decision"}, c);
        cfg.mask_threshold = jsonio::get_number(t, "mask", cfg.mask_threshold, c);
        cfg.decision_threshold = jsonio::get_number(t, "decision", cfg.decision_threshold, c);
    }
    cfg.scene.seed = cfg.seed;
    if (j.contains("scene")) {
        const Json& s = j["scene"];
        const std::string c = ctx + ".scene";
        jsonio::reject_unknown(s,
                               {"seed", "height", "width", "categories", "instance_count",
                                "sounding_count", "palette", "overlap_allowed", "sigma_noise",
                                "embedding_dim", "sounding_pool", "always_present"},
                               c);
        cfg.scene.seed = static_cast<std::uint64_t>(
            jsonio::get_integer(s, "seed", static_cast<long>(cfg.seed), c));
        cfg.scene.shape.height =
            static_cast<int>(jsonio::get_integer(s, "height", cfg.scene.shape.height, c));
        cfg.scene.shape.width =
            static_cast<int>(jsonio::get_integer(s, "width", cfg.scene.shape.width, c));
        cfg.scene.categories =
            static_cast<int>(jsonio::get_integer(s, "categories", cfg.scene.categories, c));
        auto get_range = [&](const char* key, int& lo, int& hi) {
            if (!s.contains(key)) return;
            if (!s[key].is_array() || s[key].size() != 2 || !s[key][0].is_number_integer() ||
                !s[key][1].is_number_integer())
                throw ValidationError(c + "." + key + ": expected [min, max] integers");
            lo = s[key][0].get<int>();
            hi = s[key][1].get<int>();
        };
        get_range("instance_count", cfg.scene.min_instances, cfg.scene.max_instances);
        get_range("sounding_count", cfg.scene.min_sounding, cfg.scene.max_sounding);
        if (s.contains("palette")) {
            if (!s["palette"].is_array() || s["palette"].empty())
                throw ValidationError(c + ".palette: expected a non-empty array");
            cfg.scene.palette.clear();
            for (const auto& v : s["palette"]) {
                if (!v.is_string()) throw ValidationError(c + ".palette: expected strings");
                cfg.scene.palette.push_back(shape_kind_from_string(v.get<std::string>()));
            }
        }
        cfg.scene.overlap_allowed =
            jsonio::get_bool(s, "overlap_allowed", cfg.scene.overlap_allowed, c);
        cfg.scene.sigma_noise = jsonio::get_number(s, "sigma_noise", cfg.scene.sigma_noise, c);
        cfg.scene.embedding_dim =
            static_cast<int>(jsonio::get_integer(s, "embedding_dim", cfg.scene.embedding_dim, c));
        auto get_int_list = [&](const char* key, std::vector<int>& dst) {
            if (!s.contains(key)) return;
            if (!s[key].is_array()) throw ValidationError(c + "." + key + ": expected an array");
            dst.clear();
            for (const auto& v : s[key]) {
                if (!v.is_number_integer())
                    throw ValidationError(c + "." + key + ": expected integers");
                dst.push_back(v.get<int>());
            }
        };
        get_int_list("sounding_pool", cfg.scene.sounding_pool);
        get_int_list("always_present", cfg.scene.always_present);
    }
    if (j.contains("model")) {
        const Json& m = j["model"];
        const std::string c = ctx + ".model";
        jsonio::reject_unknown(m, {"queries", "hidden_dim"}, c);
        cfg.queries = static_cast<int>(jsonio::get_integer(m, "queries", cfg.queries, c));
        cfg.hidden_dim = static_cast<int>(jsonio::get_integer(m, "hidden_dim", cfg.hidden_dim, c));
    }
    if (j.contains("optimizer")) {
        const Json& o = j["optimizer"];
        const std::string c = ctx + ".optimizer";
        jsonio::reject_unknown(o, {"lr_mask", "lr_class", "lr_head", "stage1_steps", "stage2_steps"},
                               c);
        cfg.optimizer.lr_mask = jsonio::get_number(o, "lr_mask", cfg.optimizer.lr_mask, c);
        cfg.optimizer.lr_class = jsonio::get_number(o, "lr_class", cfg.optimizer.lr_class, c);
        cfg.optimizer.lr_head = jsonio::get_number(o, "lr_head", cfg.optimizer.lr_head, c);
        cfg.optimizer.stage1_steps =
            static_cast<int>(jsonio::get_integer(o, "stage1_steps", cfg.optimizer.stage1_steps, c));
        cfg.optimizer.stage2_steps =
            static_cast<int>(jsonio::get_integer(o, "stage2_steps", cfg.optimizer.stage2_steps, c));
    }
    if (j.contains("samples")) {
        const Json& s = j["samples"];
        const std::string c = ctx + ".samples";
        jsonio::reject_unknown(s, {"train", "test"}, c);
        cfg.train_samples = static_cast<int>(jsonio::get_integer(s, "train", cfg.train_samples, c));
        cfg.test_samples = static_cast<int>(jsonio::get_integer(s, "test", cfg.test_samples, c));
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_run_config(const std::string& path) {
    return parse_run_config(jsonio::load(path), path);
}

inline Json run_config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["seed"] = cfg.seed;
    j["audio_mode"] = to_string(cfg.audio_mode);
    j["weights"] = {{"lambda_focal", cfg.weights.lambda_focal},
                    {"lambda_dice", cfg.weights.lambda_dice},
                    {"lambda_soas", cfg.weights.lambda_soas},
                    {"no_object_weight", cfg.weights.no_object_weight},
                    {"focal_gamma", cfg.weights.focal_gamma},
                    {"focal_alpha", cfg.weights.focal_alpha},
                    {"epsilon", cfg.weights.epsilon}};
    j["thresholds"] = {{"mask", cfg.mask_threshold}, {"decision", cfg.decision_threshold}};
    Json palette = Json::array();
    for (ShapeKind k : cfg.scene.palette) palette.push_back(to_string(k));
    j["scene"] = {{"seed", cfg.scene.seed},
                  {"height", cfg.scene.shape.height},
                  {"width", cfg.scene.shape.width},
                  {"categories", cfg.scene.categories},
                  {"instance_count", {cfg.scene.min_instances, cfg.scene.max_instances}},
                  {"sounding_count", {cfg.scene.min_sounding, cfg.scene.max_sounding}},
                  {"palette", palette},
                  {"overlap_allowed", cfg.scene.overlap_allowed},
                  {"sigma_noise", cfg.scene.sigma_noise},
                  {"embedding_dim", cfg.scene.embedding_dim},
                  {"sounding_pool", cfg.scene.sounding_pool},
                  {"always_present", cfg.scene.always_present}};
    j["model"] = {{"queries", cfg.queries}, {"hidden_dim", cfg.hidden_dim}};
    j["optimizer"] = {{"lr_mask", cfg.optimizer.lr_mask},
                      {"lr_class", cfg.optimizer.lr_class},
                      {"lr_head", cfg.optimizer.lr_head},
                      {"stage1_steps", cfg.optimizer.stage1_steps},
                      {"stage2_steps", cfg.optimizer.stage2_steps}};
    j["samples"] = {{"train", cfg.train_samples}, {"test", cfg.test_samples}};
    return j;
}

// ---------------------------------------------------------------------------
// Report documents
// ---------------------------------------------------------------------------

inline Json dataset_report_to_json(const DatasetReport& r) {
    Json j;
    j["frame_count"] = r.frame_count;
    j["mean_jaccard"] = r.mean_jaccard;
    j["mean_fscore"] = r.mean_fscore;
    j["micro_jaccard"] = r.micro_jaccard;
    j["micro_fscore"] = r.micro_fscore;
    if (r.silent_miou)
        j["silent_miou"] = *r.silent_miou;
    else
        j["silent_miou"] = nullptr;
    if (r.recognition_accuracy)
        j["recognition_accuracy"] = *r.recognition_accuracy;
    else
        j["recognition_accuracy"] = nullptr;
    return j;
}

inline Json matching_to_json(const MatchingIndex& idx, double total) {
    Json j;
    j["pairs"] = Json::array();
    for (auto [g, p] : idx.pairs) j["pairs"].push_back({{"gt", g}, {"prediction", p}});
    j["unmatched"] = idx.unmatched;
    j["total_cost"] = total;
    return j;
}

inline Json trace_to_json(const std::vector<Stage1TraceEntry>& s1,
                          const std::vector<Stage2TraceEntry>& s2) {
    Json j;
    j["stage1"] = Json::array();
    for (const auto& e : s1)
        j["stage1"].push_back(
            {{"step", e.step}, {"mask_cls", e.mask_cls}, {"soas", e.soas}, {"total", e.total}});
    j["stage2"] = Json::array();
    for (const auto& e : s2) j["stage2"].push_back({{"step", e.step}, {"avc", e.avc}});
    return j;
}

inline Json ablation_to_json(const AblationReport& r) {
    Json j = Json::array();
    for (const AblationArm& a : r.arms)
        j.push_back({{"name", a.name},
                     {"mean_jaccard", a.mean_jaccard},
                     {"mean_fscore", a.mean_fscore},
                     {"instances", a.instance_count}});
    return j;
}

}  // namespace avseg
