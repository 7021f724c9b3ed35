// avsc.hpp - audio-visual semantic correlation: an MLP audio head that
// predicts per-category sounding probabilities, filters that distill the
// query set into at most one instance per category, and the weighted-mask
// composition producing the localization map.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "avseg/instance.hpp"
#include "avseg/losses.hpp"
#include "avseg/mask.hpp"

namespace avseg {

using AudioEmbedding = std::vector<double>;

enum class AudioMode {
    Simplex,      // softmax output: probabilities over K categories sum to 1
    Independent,  // per-category sigmoid: several sources can be active at once
};

inline std::string to_string(AudioMode m) {
    return m == AudioMode::Simplex ? "simplex" : "independent";
}

inline AudioMode audio_mode_from_string(const std::string& s) {
    if (s == "simplex") return AudioMode::Simplex;
    if (s == "independent") return AudioMode::Independent;
    throw ValidationError("unknown audio mode '" + s + "' (expected simplex or independent)");
}

/// Two-layer MLP: input_dim -> hidden_dim (tanh) -> category_count, with
/// the output normalized per `mode`. Weights are row-major.
struct AudioHead {
    int input_dim = 0;
    int hidden_dim = 0;
    int category_count = 0;
    AudioMode mode = AudioMode::Independent;
    std::vector<double> w1;  // hidden_dim x input_dim
    std::vector<double> b1;  // hidden_dim
    std::vector<double> w2;  // category_count x hidden_dim
    std::vector<double> b2;  // category_count

    int parameter_count() const {
        return hidden_dim * input_dim + hidden_dim + category_count * hidden_dim + category_count;
    }

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || category_count < 1)
            throw ValidationError("AudioHead: dimensions must be positive");
        if (static_cast<int>(w1.size()) != hidden_dim * input_dim ||
            static_cast<int>(b1.size()) != hidden_dim ||
            static_cast<int>(w2.size()) != category_count * hidden_dim ||
            static_cast<int>(b2.size()) != category_count)
            throw ValidationError("AudioHead: parameter sizes do not match the declared dimensions");
    }
};

/// Per-category sounding probabilities P_a.
struct AudioDistribution {
    std::vector<double> probs;  // size K, each in [0,1]
};

/// Activations cached by a forward pass, enough to backpropagate.
struct AudioForwardTape {
    AudioEmbedding input;
    std::vector<double> hidden;  // tanh activations
    std::vector<double> probs;   // normalized output
};

struct AudioHeadGradients {
    std::vector<double> w1, b1, w2, b2;

    explicit AudioHeadGradients(const AudioHead& h)
        : w1(h.w1.size(), 0.0), b1(h.b1.size(), 0.0), w2(h.w2.size(), 0.0), b2(h.b2.size(), 0.0) {}
};

inline AudioForwardTape audio_forward_tape(const AudioHead& head, const AudioEmbedding& emb) {
    head.validate();
    if (static_cast<int>(emb.size()) != head.input_dim)
        throw ValidationError("audio_forward: embedding dimension " + std::to_string(emb.size()) +
                              " does not match head input dimension " +
                              std::to_string(head.input_dim));
    AudioForwardTape tape;
    tape.input = emb;
    tape.hidden.resize(head.hidden_dim);
    for (int h = 0; h < head.hidden_dim; ++h) {
        double z = head.b1[h];
        const double* row = head.w1.data() + static_cast<std::size_t>(h) * head.input_dim;
        for (int d = 0; d < head.input_dim; ++d) z += row[d] * emb[d];
        tape.hidden[h] = std::tanh(z);
    }
    std::vector<double> pre(head.category_count);
    for (int k = 0; k < head.category_count; ++k) {
        double z = head.b2[k];
        const double* row = head.w2.data() + static_cast<std::size_t>(k) * head.hidden_dim;
        for (int h = 0; h < head.hidden_dim; ++h) z += row[h] * tape.hidden[h];
        pre[k] = z;
    }
    if (head.mode == AudioMode::Simplex) {
        tape.probs = softmax(pre);
    } else {
        tape.probs.resize(pre.size());
        for (std::size_t k = 0; k < pre.size(); ++k) tape.probs[k] = sigmoid(pre[k]);
    }
    return tape;
}

inline AudioDistribution audio_forward(const AudioHead& head, const AudioEmbedding& emb) {
    return AudioDistribution{audio_forward_tape(head, emb).probs};
}

/// Accumulates parameter gradients for a loss with gradient `dprobs` at
/// the head output. Seeding dprobs with a one-hot vector yields the
/// gradient of that single output probability.
inline void audio_backward(const AudioHead& head, const AudioForwardTape& tape,
                           const std::vector<double>& dprobs, AudioHeadGradients& grads) {
    std::vector<double> dpre(head.category_count);
    if (head.mode == AudioMode::Simplex) {
        double dot = 0.0;
        for (int k = 0; k < head.category_count; ++k) dot += dprobs[k] * tape.probs[k];
        for (int k = 0; k < head.category_count; ++k)
            dpre[k] = tape.probs[k] * (dprobs[k] - dot);
    } else {
        for (int k = 0; k < head.category_count; ++k)
            dpre[k] = dprobs[k] * tape.probs[k] * (1.0 - tape.probs[k]);
    }
    std::vector<double> dhidden(head.hidden_dim, 0.0);
    for (int k = 0; k < head.category_count; ++k) {
        const std::size_t base = static_cast<std::size_t>(k) * head.hidden_dim;
        grads.b2[k] += dpre[k];
        for (int h = 0; h < head.hidden_dim; ++h) {
            grads.w2[base + h] += dpre[k] * tape.hidden[h];
            dhidden[h] += head.w2[base + h] * dpre[k];
        }
    }
    for (int h = 0; h < head.hidden_dim; ++h) {
        const double dz = dhidden[h] * (1.0 - tape.hidden[h] * tape.hidden[h]);
        const std::size_t base = static_cast<std::size_t>(h) * head.input_dim;
        grads.b1[h] += dz;
        for (int d = 0; d < head.input_dim; ++d) grads.w1[base + d] += dz * tape.input[d];
    }
}

/// One filtered candidate: a category (index form of the one-hot vector),
/// its binarized mask and the confidence it was selected with.
struct PotentialInstance {
    int category = 0;
    BinaryMask mask;
    double confidence = 0.0;
};

/// Per-pixel sounding probability map S.
struct LocalizationMap {
    MaskShape shape;
    std::vector<double> values;

    LocalizationMap() = default;
    explicit LocalizationMap(MaskShape s, double fill = 0.0)
        : shape(s), values(static_cast<std::size_t>(s.pixel_count()), fill) {
        require_valid(s, "LocalizationMap");
    }
};

/// Audio-visual correspondence loss: mean BCE between the localization
/// map and the ground-truth mask.
inline PixelLoss avc_loss(const LocalizationMap& map, const BinaryMask& gt, double eps = 1e-6) {
    require_same_shape(map.shape, gt.shape, "avc_loss");
    return bce_map_loss(map.values, gt, eps);
}

/// Drops predictions whose most likely class is the no-object class;
/// order is preserved.
inline std::vector<InstancePrediction> category_filter(const std::vector<InstancePrediction>& preds) {
    std::vector<InstancePrediction> out;
    out.reserve(preds.size());
    for (const InstancePrediction& p : preds)
        if (p.scores.argmax() < p.scores.category_count()) out.push_back(p);
    return out;
}

/// Keeps, per category, the prediction with the highest confidence
/// (its top class probability; ties go to the lowest input index) and
/// binarizes its mask at `threshold`. Output is ordered by category.
inline std::vector<PotentialInstance> score_filter(const std::vector<InstancePrediction>& preds,
                                                   double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("score_filter: threshold must lie in (0,1)");
    // category -> index of the best prediction so far
    std::vector<int> best;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int k = preds[i].scores.argmax();
        const int kc = preds[i].scores.category_count();
        if (k >= kc)
            throw ValidationError("score_filter: input contains a no-object prediction; "
                                  "apply category_filter first");
        if (static_cast<int>(best.size()) < kc) best.resize(kc, -1);
        if (best[k] < 0 || preds[i].scores.probs[k] > preds[best[k]].scores.probs[k])
            best[k] = static_cast<int>(i);
    }
    std::vector<PotentialInstance> out;
    for (std::size_t k = 0; k < best.size(); ++k) {
        if (best[k] < 0) continue;
        const InstancePrediction& p = preds[best[k]];
        out.push_back(PotentialInstance{static_cast<int>(k), binarize(p.mask, threshold),
                                        p.scores.probs[k]});
    }
    return out;
}

/// Intermediate state of a composition, kept so stage-2 training can
/// backpropagate from the map to the audio probabilities.
struct ComposeTape {
    LocalizationMap map;           // clamped to [0,1]
    std::vector<double> raw;       // pre-clamp weighted sum
    std::vector<int> categories;   // instance categories, parallel to masks
};

inline ComposeTape compose_localization_tape(const std::vector<PotentialInstance>& instances,
                                             const AudioDistribution& audio, MaskShape shape) {
    require_valid(shape, "compose_localization");
    ComposeTape tape;
    tape.map = LocalizationMap(shape);
    tape.raw.assign(static_cast<std::size_t>(shape.pixel_count()), 0.0);
    std::vector<char> seen(audio.probs.size(), 0);
    for (const PotentialInstance& inst : instances) {
        require_same_shape(inst.mask.shape, shape, "compose_localization");
        if (inst.category < 0 || inst.category >= static_cast<int>(audio.probs.size()))
            throw ValidationError("compose_localization: instance category " +
                                  std::to_string(inst.category) + " outside the audio distribution");
        if (seen[inst.category])
            throw ValidationError("compose_localization: duplicate category " +
                                  std::to_string(inst.category));
        seen[inst.category] = 1;
        tape.categories.push_back(inst.category);
        const double p = audio.probs[inst.category];
        for (std::size_t px = 0; px < tape.raw.size(); ++px)
            if (inst.mask.pixels[px]) tape.raw[px] += p;
    }
    for (std::size_t px = 0; px < tape.raw.size(); ++px)
        tape.map.values[px] = std::min(std::max(tape.raw[px], 0.0), 1.0);
    return tape;
}

/// S = sum_j p(category_j) * mask_j, clamped to [0,1]. An empty instance
/// list yields the all-zero map.
inline LocalizationMap compose_localization(const std::vector<PotentialInstance>& instances,
                                            const AudioDistribution& audio, MaskShape shape) {
    return compose_localization_tape(instances, audio, shape).map;
}

/// Backpropagates a gradient at the map into gradients on the audio
/// probabilities. Pixels pinned by the clamp pass nothing through.
inline std::vector<double> compose_backward(const ComposeTape& tape,
                                            const std::vector<PotentialInstance>& instances,
                                            const std::vector<double>& dmap, int category_count) {
    std::vector<double> dprobs(category_count, 0.0);
    for (const PotentialInstance& inst : instances) {
        double acc = 0.0;
        for (std::size_t px = 0; px < dmap.size(); ++px)
            if (inst.mask.pixels[px] && tape.raw[px] > 0.0 && tape.raw[px] < 1.0)
                acc += dmap[px];
        dprobs[inst.category] += acc;
    }
    return dprobs;
}

struct InferenceResult {
    LocalizationMap map;
    BinaryMask mask;
};

/// Full pipeline for one frame: category filter -> score filter -> audio
/// head -> composition -> binarize at decision_threshold.
inline InferenceResult infer(const std::vector<InstancePrediction>& preds, const AudioHead& head,
                             const AudioEmbedding& emb, double mask_threshold,
                             double decision_threshold) {
    if (preds.empty()) throw ValidationError("infer: empty prediction list");
    const MaskShape shape = preds.front().mask.shape;
    const std::vector<PotentialInstance> instances =
        score_filter(category_filter(preds), mask_threshold);
    const AudioDistribution audio = audio_forward(head, emb);
    LocalizationMap map = compose_localization(instances, audio, shape);
    SoftMask as_soft{map.shape, map.values};
    return InferenceResult{std::move(map), binarize(as_soft, decision_threshold)};
}

}  // namespace avseg
