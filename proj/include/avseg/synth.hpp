// synth.hpp - deterministic synthetic benchmark: seeded scene/audio
// generation, the free-parameter toy model, the two-stage trainer, and
// the evaluation protocols run against trained models.
//
// Scenes are subsets of per-category canonical instances whose geometry
// is drawn once from the scene seed. A category keeps the same mask in
// every scene it appears in, so the same object can be sounding in one
// sample and silent in another while global query parameters can still
// learn it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "avseg/avsc.hpp"
#include "avseg/instance.hpp"
#include "avseg/losses.hpp"
#include "avseg/mask.hpp"
#include "avseg/matching.hpp"
#include "avseg/metrics.hpp"

namespace avseg {

// ---------------------------------------------------------------------------
// Seeded randomness. The engine is std::mt19937_64 (bit-exact by the
// standard); distributions are hand-rolled so streams are identical on
// every platform and standard library.
// ---------------------------------------------------------------------------

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds, rejection-sampled so the draw is unbiased
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<int>(x % span);
    }

    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // first k elements of a Fisher-Yates pass over `items`
    std::vector<int> sample_distinct(std::vector<int> items, int k) {
        for (int i = 0; i < k; ++i) {
            const int j = uniform_int(i, static_cast<int>(items.size()) - 1);
            std::swap(items[i], items[j]);
        }
        items.resize(k);
        return items;
    }

private:
    std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Scene specification and generation
// ---------------------------------------------------------------------------

enum class ShapeKind { Rectangle, Ellipse };

struct SceneSpec {
    std::uint64_t seed = 0;
    MaskShape shape{32, 32};
    int categories = 6;  // K
    int min_instances = 2;
    int max_instances = 4;
    int min_sounding = 1;
    int max_sounding = 1;
    std::vector<ShapeKind> palette{ShapeKind::Rectangle, ShapeKind::Ellipse};
    bool overlap_allowed = false;
    double sigma_noise = 0.1;
    int embedding_dim = 16;
    // Categories allowed to carry sound (empty = all). Categories outside
    // the pool appear only as silent instances, the regime the silent
    // object-aware loss is built for.
    std::vector<int> sounding_pool;
    // Categories placed in every scene regardless of the instance draw.
    std::vector<int> always_present;

    void validate() const {
        require_valid(shape, "SceneSpec");
        if (categories < 1) throw ValidationError("SceneSpec: need at least one category");
        if (min_instances < 1 || min_instances > max_instances || max_instances > categories)
            throw ValidationError("SceneSpec: instance count range must satisfy 1 <= min <= max <= K");
        if (min_sounding < 1 || min_sounding > max_sounding || max_sounding > categories)
            throw ValidationError("SceneSpec: sounding count range must satisfy 1 <= min <= max <= K");
        if (max_sounding > max_instances)
            throw ValidationError("SceneSpec: sounding range exceeds instance range");
        if (palette.empty()) throw ValidationError("SceneSpec: empty shape palette");
        if (sigma_noise < 0) throw ValidationError("SceneSpec: negative noise");
        if (embedding_dim < categories)
            throw ValidationError("SceneSpec: embedding dimension must be >= category count so "
                                  "each category has an orthogonal basis vector");
        for (int c : sounding_pool)
            if (c < 0 || c >= categories)
                throw ValidationError("SceneSpec: sounding_pool entry out of range");
        for (int c : always_present)
            if (c < 0 || c >= categories)
                throw ValidationError("SceneSpec: always_present entry out of range");
        const int pool = sounding_pool.empty() ? categories : static_cast<int>(sounding_pool.size());
        if (min_sounding > pool)
            throw ValidationError("SceneSpec: min_sounding exceeds the sounding pool");
    }
};

namespace detail {

inline void fill_rectangle(BinaryMask& m, int top, int left, int h, int w) {
    for (int r = top; r < top + h; ++r)
        for (int c = left; c < left + w; ++c) m.set(r, c, 1);
}

inline void fill_ellipse(BinaryMask& m, double cy, double cx, double ry, double rx) {
    for (int r = 0; r < m.shape.height; ++r) {
        for (int c = 0; c < m.shape.width; ++c) {
            const double dy = (r - cy) / ry;
            const double dx = (c - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) m.set(r, c, 1);
        }
    }
}

}  // namespace detail

/// The fixed per-category instance masks for a spec. Without overlap the
/// grid is partitioned into cells (one per category, seed-permuted) and
/// each shape is drawn inside its cell, so masks are pairwise disjoint.
inline std::vector<BinaryMask> canonical_masks(const SceneSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, 0xCA0E));
    std::vector<BinaryMask> out;
    const int k = spec.categories;
    if (spec.overlap_allowed) {
        for (int c = 0; c < k; ++c) {
            BinaryMask m(spec.shape);
            const ShapeKind kind = spec.palette[rng.uniform_int(0, (int)spec.palette.size() - 1)];
            const int max_h = std::max(2, spec.shape.height / 3);
            const int max_w = std::max(2, spec.shape.width / 3);
            const int h = rng.uniform_int(std::max(1, max_h / 2), max_h);
            const int w = rng.uniform_int(std::max(1, max_w / 2), max_w);
            const int top = rng.uniform_int(0, spec.shape.height - h);
            const int left = rng.uniform_int(0, spec.shape.width - w);
            if (kind == ShapeKind::Rectangle) {
                detail::fill_rectangle(m, top, left, h, w);
            } else {
                detail::fill_ellipse(m, top + (h - 1) / 2.0, left + (w - 1) / 2.0,
                                     std::max(1.0, h / 2.0), std::max(1.0, w / 2.0));
            }
            if (area(m) == 0) m.set(top, left, 1);
            out.push_back(std::move(m));
        }
        return out;
    }
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const int rows = (k + cols - 1) / cols;
    const int cell_h = spec.shape.height / rows;
    const int cell_w = spec.shape.width / cols;
    if (cell_h < 3 || cell_w < 3)
        throw ValidationError("SceneSpec: grid " + spec.shape.str() + " too small for " +
                              std::to_string(k) + " non-overlapping categories");
    std::vector<int> cell(k);
    for (int i = 0; i < k; ++i) cell[i] = i;
    cell = rng.sample_distinct(cell, k);  // full permutation
    for (int c = 0; c < k; ++c) {
        BinaryMask m(spec.shape);
        const int cr = cell[c] / cols, cc = cell[c] % cols;
        const int top0 = cr * cell_h + 1, left0 = cc * cell_w + 1;
        const int usable_h = cell_h - 2, usable_w = cell_w - 2;
        const ShapeKind kind = spec.palette[rng.uniform_int(0, (int)spec.palette.size() - 1)];
        const int h = rng.uniform_int(std::max(1, usable_h / 2), usable_h);
        const int w = rng.uniform_int(std::max(1, usable_w / 2), usable_w);
        const int top = top0 + rng.uniform_int(0, usable_h - h);
        const int left = left0 + rng.uniform_int(0, usable_w - w);
        if (kind == ShapeKind::Rectangle) {
            detail::fill_rectangle(m, top, left, h, w);
        } else {
            detail::fill_ellipse(m, top + (h - 1) / 2.0, left + (w - 1) / 2.0,
                                 std::max(1.0, h / 2.0), std::max(1.0, w / 2.0));
        }
        if (area(m) == 0) m.set(top, left, 1);
        out.push_back(std::move(m));
    }
    return out;
}

/// One generated frame/audio pair. `all_instances` (sounding + silent) is
/// available to test oracles and evaluation protocols only; training
/// consumes the narrowed TrainingSample view, which cannot carry it.
struct SyntheticSample {
    std::vector<GroundTruthSegment> gts;            // sounding instances only
    std::vector<GroundTruthSegment> all_instances;  // sounding + silent
    AudioEmbedding audio_embedding;
    std::vector<int> sounding_categories;  // sorted
    BinaryMask gt_union;                   // union of sounding masks
};

inline AudioEmbedding category_basis_embedding(int dim, const std::vector<int>& categories) {
    AudioEmbedding e(static_cast<std::size_t>(dim), 0.0);
    for (int c : categories) {
        if (c < 0 || c >= dim)
            throw ValidationError("category_basis_embedding: category outside embedding dimension");
        e[c] += 1.0;
    }
    return e;
}

inline std::vector<SyntheticSample> generate(const SceneSpec& spec, int count) {
    if (count < 1) throw ValidationError("generate: count must be >= 1");
    spec.validate();
    const std::vector<BinaryMask> canon = canonical_masks(spec);
    std::vector<int> pool = spec.sounding_pool;
    if (pool.empty()) {
        pool.resize(spec.categories);
        for (int c = 0; c < spec.categories; ++c) pool[c] = c;
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    std::vector<SyntheticSample> out;
    out.reserve(count);
    for (int idx = 0; idx < count; ++idx) {
        Rng rng(mix_seed(spec.seed, 0x5A3D0000ULL + static_cast<std::uint64_t>(idx)));
        const int n_inst = rng.uniform_int(spec.min_instances, spec.max_instances);
        const int snd_cap = std::min({spec.max_sounding, n_inst, static_cast<int>(pool.size())});
        const int n_snd = rng.uniform_int(std::min(spec.min_sounding, snd_cap), snd_cap);
        std::vector<int> sounding = rng.sample_distinct(pool, n_snd);
        std::sort(sounding.begin(), sounding.end());

        std::vector<char> present(spec.categories, 0);
        for (int c : sounding) present[c] = 1;
        for (int c : spec.always_present) present[c] = 1;
        int have = 0;
        for (char p : present) have += p;
        if (have < n_inst) {
            std::vector<int> rest;
            for (int c = 0; c < spec.categories; ++c)
                if (!present[c]) rest.push_back(c);
            for (int c : rng.sample_distinct(rest, n_inst - have)) present[c] = 1;
        }

        SyntheticSample s;
        s.sounding_categories = sounding;
        for (int c = 0; c < spec.categories; ++c) {
            if (!present[c]) continue;
            s.all_instances.push_back(GroundTruthSegment{c, canon[c]});
            if (std::binary_search(sounding.begin(), sounding.end(), c))
                s.gts.push_back(GroundTruthSegment{c, canon[c]});
        }
        std::vector<BinaryMask> snd_masks;
        for (const GroundTruthSegment& g : s.gts) snd_masks.push_back(g.mask);
        s.gt_union = union_all(snd_masks);
        s.audio_embedding = category_basis_embedding(spec.embedding_dim, sounding);
        for (double& v : s.audio_embedding) v += spec.sigma_noise * rng.normal();
        out.push_back(std::move(s));
    }
    return out;
}

/// The trainer-facing projection of a sample. It has no all_instances
/// member, so silent-instance annotations cannot leak into training.
struct TrainingSample {
    std::vector<GroundTruthSegment> gts;
    AudioEmbedding audio_embedding;
    BinaryMask gt_union;
};

inline TrainingSample training_view(const SyntheticSample& s) {
    return TrainingSample{s.gts, s.audio_embedding, s.gt_union};
}

inline std::vector<TrainingSample> training_views(const std::vector<SyntheticSample>& all) {
    std::vector<TrainingSample> out;
    out.reserve(all.size());
    for (const SyntheticSample& s : all) out.push_back(training_view(s));
    return out;
}

// ---------------------------------------------------------------------------
// Toy model: free per-query parameters in place of a learned decoder.
// ---------------------------------------------------------------------------

struct ToyModel {
    int queries = 0;
    MaskShape shape;
    int categories = 0;  // K
    std::vector<double> mask_logits;   // queries * H * W
    std::vector<double> class_logits;  // queries * (K+1)
    AudioHead head;

    static ToyModel init(std::uint64_t seed, int queries, MaskShape shape, int categories,
                         int embedding_dim, int hidden_dim, AudioMode mode) {
        if (queries < 1) throw ValidationError("ToyModel: need at least one query");
        require_valid(shape, "ToyModel");
        Rng rng(mix_seed(seed, 0xB007));
        ToyModel m;
        m.queries = queries;
        m.shape = shape;
        m.categories = categories;
        const int px = shape.pixel_count();
        m.mask_logits.resize(static_cast<std::size_t>(queries) * px);
        // Start masks just below the binarization midpoint: untrained
        // queries propose nothing, and the margin is small enough that
        // off-foreground pressure can lift a spare query's mask over the
        // line where annotated objects never sound.
        for (double& v : m.mask_logits) v = -0.15 + 0.02 * rng.normal();
        const int k1 = categories + 1;
        m.class_logits.assign(static_cast<std::size_t>(queries) * k1, 0.0);
        // Round-robin class bias breaks the symmetry between queries so
        // every category has a natural first candidate; later rounds get
        // a weaker bias so two queries never contest a category on noise
        // alone.
        for (int i = 0; i < queries; ++i) {
            const double bias = std::max(0.1, 0.35 - 0.12 * (i / k1));
            for (int k = 0; k < k1; ++k)
                m.class_logits[static_cast<std::size_t>(i) * k1 + k] =
                    (k == i % k1 ? bias : 0.0) + 0.02 * rng.normal();
        }
        m.head.input_dim = embedding_dim;
        m.head.hidden_dim = hidden_dim;
        m.head.category_count = categories;
        m.head.mode = mode;
        m.head.w1.resize(static_cast<std::size_t>(hidden_dim) * embedding_dim);
        m.head.b1.assign(hidden_dim, 0.0);
        m.head.w2.resize(static_cast<std::size_t>(categories) * hidden_dim);
        m.head.b2.assign(categories, 0.0);
        // Small head init keeps untrained input directions close to the
        // (trained) bias, so audio categories never seen sounding do not
        // fire by accident.
        const double s1 = 0.3 / std::sqrt(static_cast<double>(embedding_dim));
        for (double& v : m.head.w1) v = s1 * rng.normal();
        const double s2 = 0.3 / std::sqrt(static_cast<double>(hidden_dim));
        for (double& v : m.head.w2) v = s2 * rng.normal();
        return m;
    }

    std::vector<InstancePrediction> predictions() const {
        std::vector<InstancePrediction> out(queries);
        const int px = shape.pixel_count();
        const int k1 = categories + 1;
        for (int i = 0; i < queries; ++i) {
            std::vector<double> logits(class_logits.begin() + static_cast<std::size_t>(i) * k1,
                                       class_logits.begin() + static_cast<std::size_t>(i + 1) * k1);
            out[i].scores.probs = softmax(logits);
            out[i].mask = SoftMask(shape);
            const double* src = mask_logits.data() + static_cast<std::size_t>(i) * px;
            for (int p = 0; p < px; ++p) out[i].mask.pixels[p] = sigmoid(src[p]);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Trainers. A step is one deterministic pass over the samples with an
// update after each sample; trace entries hold per-step means.
// ---------------------------------------------------------------------------

struct Stage1TraceEntry {
    int step = 0;
    double mask_cls = 0.0;
    double soas = 0.0;
    double total = 0.0;
};

struct Stage2TraceEntry {
    int step = 0;
    double avc = 0.0;
};

/// Stage 1: gradient descent on mask and class logits, audio head frozen.
/// Matching is recomputed for every sample visit.
inline std::vector<Stage1TraceEntry> train_stage1(ToyModel& model,
                                                  const std::vector<TrainingSample>& samples,
                                                  const LossWeights& w, double lr_mask,
                                                  double lr_class, int steps) {
    if (!(lr_mask > 0) || !(lr_class > 0))
        throw ValidationError("train_stage1: learning rates must be positive");
    if (steps < 0) throw ValidationError("train_stage1: negative step count");
    w.validate();
    if (samples.empty()) throw ValidationError("train_stage1: no samples");
    const CostWeights cw = CostWeights::from(w);
    const int px = model.shape.pixel_count();
    const int k1 = model.categories + 1;
    std::vector<Stage1TraceEntry> trace;
    trace.reserve(steps);
    for (int step = 1; step <= steps; ++step) {
        Stage1TraceEntry entry{step, 0.0, 0.0, 0.0};
        for (const TrainingSample& s : samples) {
            const std::vector<InstancePrediction> preds = model.predictions();
            const MatchingIndex idx = match(preds, s.gts, cw);
            const SegmentationLoss loss = segmentation_loss(preds, s.gts, idx, w);
            if (!std::isfinite(loss.value))
                throw std::runtime_error("train_stage1: diverged at step " + std::to_string(step) +
                                         " (loss=" + std::to_string(loss.value) + ")");
            for (int i = 0; i < model.queries; ++i) {
                double* mrow = model.mask_logits.data() + static_cast<std::size_t>(i) * px;
                const std::vector<double>& mg = loss.mask_logit_grads[i];
                for (int p = 0; p < px; ++p) mrow[p] -= lr_mask * mg[p];
                double* crow = model.class_logits.data() + static_cast<std::size_t>(i) * k1;
                const std::vector<double>& cg = loss.class_logit_grads[i];
                for (int k = 0; k < k1; ++k) crow[k] -= lr_class * cg[k];
            }
            entry.mask_cls += loss.mask_cls_value;
            entry.soas += loss.soas_value;
            entry.total += loss.value;
        }
        const double inv = 1.0 / static_cast<double>(samples.size());
        entry.mask_cls *= inv;
        entry.soas *= inv;
        entry.total *= inv;
        trace.push_back(entry);
    }
    return trace;
}

/// Stage 2: gradient descent on the audio head only, through the forward
/// pass, the localization-map composition and the correspondence loss.
/// The stage-1 instance set is frozen up front.
inline std::vector<Stage2TraceEntry> train_stage2(ToyModel& model,
                                                  const std::vector<TrainingSample>& samples,
                                                  const LossWeights& w, double mask_threshold,
                                                  double lr_head, int steps) {
    if (!(lr_head > 0)) throw ValidationError("train_stage2: learning rate must be positive");
    if (steps < 0) throw ValidationError("train_stage2: negative step count");
    if (samples.empty()) throw ValidationError("train_stage2: no samples");
    const std::vector<PotentialInstance> instances =
        score_filter(category_filter(model.predictions()), mask_threshold);
    std::vector<Stage2TraceEntry> trace;
    trace.reserve(steps);
    for (int step = 1; step <= steps; ++step) {
        Stage2TraceEntry entry{step, 0.0};
        for (const TrainingSample& s : samples) {
            const AudioForwardTape tape = audio_forward_tape(model.head, s.audio_embedding);
            const ComposeTape ct =
                compose_localization_tape(instances, AudioDistribution{tape.probs}, model.shape);
            const PixelLoss loss = avc_loss(ct.map, s.gt_union, w.epsilon);
            if (!std::isfinite(loss.value))
                throw std::runtime_error("train_stage2: diverged at step " + std::to_string(step) +
                                         " (loss=" + std::to_string(loss.value) + ")");
            const std::vector<double> dprobs =
                compose_backward(ct, instances, loss.grad, model.categories);
            AudioHeadGradients g(model.head);
            audio_backward(model.head, tape, dprobs, g);
            for (std::size_t j = 0; j < model.head.w1.size(); ++j)
                model.head.w1[j] -= lr_head * g.w1[j];
            for (std::size_t j = 0; j < model.head.b1.size(); ++j)
                model.head.b1[j] -= lr_head * g.b1[j];
            for (std::size_t j = 0; j < model.head.w2.size(); ++j)
                model.head.w2[j] -= lr_head * g.w2[j];
            for (std::size_t j = 0; j < model.head.b2.size(); ++j)
                model.head.b2[j] -= lr_head * g.b2[j];
            entry.avc += loss.value;
        }
        entry.avc /= static_cast<double>(samples.size());
        trace.push_back(entry);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct PipelineEval {
    DatasetReport report;
    // mean over frames of (mean sounding-category prob - mean silent-category prob)
    double sounding_prob_gap = 0.0;
    // potential instances with non-empty masks, summed over frames
    long instance_count = 0;
};

inline PipelineEval evaluate_pipeline(const ToyModel& model,
                                      const std::vector<SyntheticSample>& test,
                                      double mask_threshold, double decision_threshold,
                                      double beta2 = 0.3) {
    if (test.empty()) throw ValidationError("evaluate_pipeline: no test samples");
    const std::vector<InstancePrediction> preds = model.predictions();
    std::vector<std::pair<BinaryMask, BinaryMask>> frames;
    frames.reserve(test.size());
    PipelineEval out;
    for (const SyntheticSample& s : test) {
        const InferenceResult res =
            infer(preds, model.head, s.audio_embedding, mask_threshold, decision_threshold);
        frames.emplace_back(res.mask, s.gt_union);
        const std::vector<PotentialInstance> qr =
            score_filter(category_filter(preds), mask_threshold);
        for (const PotentialInstance& inst : qr)
            if (area(inst.mask) > 0) ++out.instance_count;
        const AudioDistribution audio = audio_forward(model.head, s.audio_embedding);
        double snd = 0.0, sil = 0.0;
        int n_snd = 0, n_sil = 0;
        for (int c = 0; c < model.categories; ++c) {
            if (std::binary_search(s.sounding_categories.begin(), s.sounding_categories.end(), c)) {
                snd += audio.probs[c];
                ++n_snd;
            } else {
                sil += audio.probs[c];
                ++n_sil;
            }
        }
        if (n_snd > 0 && n_sil > 0) out.sounding_prob_gap += snd / n_snd - sil / n_sil;
    }
    out.sounding_prob_gap /= static_cast<double>(test.size());
    out.report = dataset_eval(frames, beta2);
    return out;
}

struct ProtocolReport {
    double recognition_accuracy = 0.0;
    double silent_miou = 0.0;
    long frames = 0;
};

/// Silent protocol: every test frame is paired with a zeroed audio
/// embedding; a correct model segments nothing.
inline ProtocolReport silent_protocol(const ToyModel& model,
                                      const std::vector<SyntheticSample>& test,
                                      double mask_threshold, double decision_threshold) {
    const std::vector<InstancePrediction> preds = model.predictions();
    const AudioEmbedding zero(static_cast<std::size_t>(model.head.input_dim), 0.0);
    std::vector<std::pair<BinaryMask, BinaryMask>> frames;
    for (std::size_t f = 0; f < test.size(); ++f) {
        const InferenceResult res = infer(preds, model.head, zero, mask_threshold, decision_threshold);
        frames.emplace_back(res.mask, BinaryMask(model.shape));
    }
    const DatasetReport rep = dataset_eval(frames);
    return ProtocolReport{rep.recognition_accuracy.value_or(0.0), rep.silent_miou.value_or(0.0),
                          rep.frame_count};
}

/// Unmatching protocol: each frame is paired with audio built from the
/// categories absent from it (silent instances included), so again the
/// correct output is empty. Frames containing every category are skipped.
inline ProtocolReport unmatching_protocol(const ToyModel& model,
                                          const std::vector<SyntheticSample>& test,
                                          double mask_threshold, double decision_threshold) {
    const std::vector<InstancePrediction> preds = model.predictions();
    std::vector<std::pair<BinaryMask, BinaryMask>> frames;
    for (const SyntheticSample& s : test) {
        std::vector<char> present(model.categories, 0);
        for (const GroundTruthSegment& g : s.all_instances) present[g.category] = 1;
        std::vector<int> absent;
        for (int c = 0; c < model.categories; ++c)
            if (!present[c]) absent.push_back(c);
        if (absent.empty()) continue;
        const AudioEmbedding emb = category_basis_embedding(model.head.input_dim, absent);
        const InferenceResult res = infer(preds, model.head, emb, mask_threshold, decision_threshold);
        frames.emplace_back(res.mask, BinaryMask(model.shape));
    }
    if (frames.empty()) return ProtocolReport{};
    const DatasetReport rep = dataset_eval(frames);
    return ProtocolReport{rep.recognition_accuracy.value_or(0.0), rep.silent_miou.value_or(0.0),
                          rep.frame_count};
}

// ---------------------------------------------------------------------------
// Whole-run driver and ablation studies
// ---------------------------------------------------------------------------

struct OptimizerConfig {
    double lr_mask = 0.5;
    double lr_class = 0.5;
    double lr_head = 0.05;
    int stage1_steps = 300;
    int stage2_steps = 120;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    SceneSpec scene;
    int train_samples = 200;
    int test_samples = 50;
    int queries = 12;
    int hidden_dim = 24;
    AudioMode audio_mode = AudioMode::Independent;
    LossWeights weights;
    OptimizerConfig optimizer;
    double mask_threshold = 0.5;
    double decision_threshold = 0.5;

    void validate() const {
        scene.validate();
        weights.validate();
        if (train_samples < 1 || test_samples < 1)
            throw ValidationError("ExperimentConfig: need at least one train and one test sample");
        if (queries < 1) throw ValidationError("ExperimentConfig: need at least one query");
        // the query set must be strictly larger than any ground-truth set
        if (queries <= scene.max_sounding)
            throw ValidationError("ExperimentConfig: queries must exceed the maximum sounding count");
        if (hidden_dim < 1) throw ValidationError("ExperimentConfig: hidden_dim must be positive");
        if (!(mask_threshold > 0 && mask_threshold < 1) ||
            !(decision_threshold > 0 && decision_threshold < 1))
            throw ValidationError("ExperimentConfig: thresholds must lie in (0,1)");
        if (!(optimizer.lr_mask > 0) || !(optimizer.lr_class > 0) || !(optimizer.lr_head > 0))
            throw ValidationError("ExperimentConfig: learning rates must be positive");
        if (optimizer.stage1_steps < 0 || optimizer.stage2_steps < 0)
            throw ValidationError("ExperimentConfig: negative step counts");
    }
};

struct ExperimentResult {
    ToyModel model;
    std::vector<Stage1TraceEntry> stage1_trace;
    std::vector<Stage2TraceEntry> stage2_trace;
    PipelineEval eval;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<SyntheticSample> all =
        generate(cfg.scene, cfg.train_samples + cfg.test_samples);
    const std::vector<SyntheticSample> train(all.begin(), all.begin() + cfg.train_samples);
    const std::vector<SyntheticSample> test(all.begin() + cfg.train_samples, all.end());
    ExperimentResult res;
    res.model = ToyModel::init(mix_seed(cfg.seed, 0xF00D), cfg.queries, cfg.scene.shape,
                               cfg.scene.categories, cfg.scene.embedding_dim, cfg.hidden_dim,
                               cfg.audio_mode);
    const std::vector<TrainingSample> views = training_views(train);
    res.stage1_trace = train_stage1(res.model, views, cfg.weights, cfg.optimizer.lr_mask,
                                    cfg.optimizer.lr_class, cfg.optimizer.stage1_steps);
    res.stage2_trace = train_stage2(res.model, views, cfg.weights, cfg.mask_threshold,
                                    cfg.optimizer.lr_head, cfg.optimizer.stage2_steps);
    res.eval = evaluate_pipeline(res.model, test, cfg.mask_threshold, cfg.decision_threshold);
    return res;
}

enum class AblationStudy { Soas, Avsc };

struct AblationArm {
    std::string name;
    double mean_jaccard = 0.0;
    double mean_fscore = 0.0;
    long instance_count = 0;
};

struct AblationReport {
    std::vector<AblationArm> arms;
};

/// Evaluates a trained model with the audio pipeline replaced by the
/// highest-confidence single instance, the no-correlation baseline.
inline PipelineEval evaluate_highest_confidence(const ToyModel& model,
                                                const std::vector<SyntheticSample>& test,
                                                double mask_threshold, double beta2 = 0.3) {
    if (test.empty()) throw ValidationError("evaluate_highest_confidence: no test samples");
    const std::vector<InstancePrediction> preds = model.predictions();
    const std::vector<PotentialInstance> qr = score_filter(category_filter(preds), mask_threshold);
    BinaryMask best(model.shape);
    double best_conf = -1.0;
    for (const PotentialInstance& inst : qr) {
        if (inst.confidence > best_conf) {
            best_conf = inst.confidence;
            best = inst.mask;
        }
    }
    PipelineEval out;
    std::vector<std::pair<BinaryMask, BinaryMask>> frames;
    for (const SyntheticSample& s : test) {
        frames.emplace_back(best, s.gt_union);
        for (const PotentialInstance& inst : qr)
            if (area(inst.mask) > 0) ++out.instance_count;
    }
    out.report = dataset_eval(frames, beta2);
    return out;
}

/// Trains the requested variants identically except for the ablated
/// component and reports mean J, mean F and the surviving-instance count.
inline AblationReport ablate(const ExperimentConfig& cfg, AblationStudy study) {
    AblationReport rep;
    if (study == AblationStudy::Soas) {
        ExperimentConfig with = cfg;
        ExperimentConfig without = cfg;
        without.weights.lambda_soas = 0.0;
        const ExperimentResult a = run_experiment(with);
        const ExperimentResult b = run_experiment(without);
        rep.arms.push_back(AblationArm{"with_soas", a.eval.report.mean_jaccard,
                                       a.eval.report.mean_fscore, a.eval.instance_count});
        rep.arms.push_back(AblationArm{"without_soas", b.eval.report.mean_jaccard,
                                       b.eval.report.mean_fscore, b.eval.instance_count});
    } else {
        const ExperimentResult a = run_experiment(cfg);
        const std::vector<SyntheticSample> all =
            generate(cfg.scene, cfg.train_samples + cfg.test_samples);
        const std::vector<SyntheticSample> test(all.begin() + cfg.train_samples, all.end());
        const PipelineEval base =
            evaluate_highest_confidence(a.model, test, cfg.mask_threshold);
        rep.arms.push_back(AblationArm{"with_avsc", a.eval.report.mean_jaccard,
                                       a.eval.report.mean_fscore, a.eval.instance_count});
        rep.arms.push_back(AblationArm{"highest_confidence", base.report.mean_jaccard,
                                       base.report.mean_fscore, base.instance_count});
    }
    return rep;
}

}  // namespace avseg
