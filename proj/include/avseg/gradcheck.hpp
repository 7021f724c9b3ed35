// gradcheck.hpp - central finite-difference verification of every
// analytic gradient. The numeric side only ever evaluates loss values,
// so it is independent of the gradient code it checks.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avseg/avsc.hpp"
#include "avseg/losses.hpp"
#include "avseg/matching.hpp"
#include "avseg/synth.hpp"

namespace avseg {

struct GradCheckSpec {
    std::uint64_t seed = 0;
    int instances = 20;
    MaskShape shape{6, 6};
    int queries = 4;
    int categories = 3;
    int gt_count = 2;
    int embedding_dim = 8;
    int hidden_dim = 8;
    // Base half-step for the Richardson-extrapolated central difference.
    // The two-step combination cancels the h^2 truncation term, so the
    // reference stays accurate even for gradient entries near the 1e-8
    // comparison floor, where a single-step scheme is roundoff-limited.
    double step = 4e-4;
    double min_magnitude = 1e-8;  // entries below this are not compared
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    long entries = 0;
};

namespace detail {

struct GradAccum {
    double max_rel = 0.0;
    long entries = 0;

    void add(double analytic, double numeric, double min_mag) {
        const double m = std::max(std::abs(analytic), std::abs(numeric));
        ++entries;
        if (m <= min_mag) return;
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / m);
    }
};

// Fourth-order central difference: Richardson extrapolation of the
// two-point scheme at steps 2h and h. `set` writes a perturbed value,
// `eval` recomputes the loss.
inline double central_diff(double x, double h, const std::function<void(double)>& set,
                           const std::function<double()>& eval) {
    auto two_point = [&](double step) {
        set(x + step);
        const double hi = eval();
        set(x - step);
        const double lo = eval();
        return (hi - lo) / (2.0 * step);
    };
    const double coarse = two_point(2.0 * h);
    const double fine = two_point(h);
    set(x);
    return (4.0 * fine - coarse) / 3.0;
}

struct RandomScene {
    std::vector<std::vector<double>> class_logits;  // per query, K+1
    std::vector<std::vector<double>> mask_logits;   // per query, H*W
    std::vector<InstancePrediction> preds;
    std::vector<GroundTruthSegment> gts;
};

inline BinaryMask random_binary_mask(Rng& rng, MaskShape shape, double density) {
    BinaryMask m(shape);
    for (auto& p : m.pixels) p = rng.uniform() < density ? 1 : 0;
    if (area(m) == 0) m.pixels[rng.uniform_int(0, shape.pixel_count() - 1)] = 1;
    return m;
}

inline RandomScene random_scene(Rng& rng, const GradCheckSpec& spec) {
    RandomScene s;
    const int k1 = spec.categories + 1;
    for (int i = 0; i < spec.queries; ++i) {
        std::vector<double> cl(k1);
        for (double& v : cl) v = rng.uniform(-1.0, 1.0);
        std::vector<double> ml(spec.shape.pixel_count());
        for (double& v : ml) v = rng.uniform(-2.0, 2.0);
        s.class_logits.push_back(std::move(cl));
        s.mask_logits.push_back(std::move(ml));
    }
    std::vector<int> all_cats(spec.categories);
    for (int c = 0; c < spec.categories; ++c) all_cats[c] = c;
    const std::vector<int> cats = rng.sample_distinct(all_cats, spec.gt_count);
    for (int g = 0; g < spec.gt_count; ++g)
        s.gts.push_back(GroundTruthSegment{cats[g], random_binary_mask(rng, spec.shape, 0.45)});
    s.preds.resize(spec.queries);
    for (int i = 0; i < spec.queries; ++i) {
        s.preds[i].scores.probs = softmax(s.class_logits[i]);
        s.preds[i].mask = SoftMask(spec.shape);
        for (int p = 0; p < spec.shape.pixel_count(); ++p)
            s.preds[i].mask.pixels[p] = sigmoid(s.mask_logits[i][p]);
    }
    return s;
}

inline void refresh_pred(RandomScene& s, int i) {
    s.preds[i].scores.probs = softmax(s.class_logits[i]);
    for (std::size_t p = 0; p < s.preds[i].mask.pixels.size(); ++p)
        s.preds[i].mask.pixels[p] = sigmoid(s.mask_logits[i][p]);
}

inline AudioHead random_head(Rng& rng, const GradCheckSpec& spec, AudioMode mode) {
    AudioHead h;
    h.input_dim = spec.embedding_dim;
    h.hidden_dim = spec.hidden_dim;
    h.category_count = spec.categories;
    h.mode = mode;
    h.w1.resize(static_cast<std::size_t>(spec.hidden_dim) * spec.embedding_dim);
    h.b1.resize(spec.hidden_dim);
    h.w2.resize(static_cast<std::size_t>(spec.categories) * spec.hidden_dim);
    h.b2.resize(spec.categories);
    for (double& v : h.w1) v = rng.uniform(-0.7, 0.7);
    for (double& v : h.b1) v = rng.uniform(-0.3, 0.3);
    for (double& v : h.w2) v = rng.uniform(-0.7, 0.7);
    for (double& v : h.b2) v = rng.uniform(-0.3, 0.3);
    return h;
}

// Disjoint per-category masks keep the composed map away from the clamp
// boundary, where a two-sided difference would straddle the kink.
inline std::vector<PotentialInstance> disjoint_instances(Rng& rng, const GradCheckSpec& spec) {
    std::vector<PotentialInstance> out;
    for (int c = 0; c < spec.categories; ++c) {
        BinaryMask m(spec.shape);
        for (int p = 0; p < spec.shape.pixel_count(); ++p)
            if (p % spec.categories == c && rng.uniform() < 0.7) m.pixels[p] = 1;
        out.push_back(PotentialInstance{c, std::move(m), 1.0});
    }
    return out;
}

}  // namespace detail

/// Runs every gradient check over `spec.instances` seeded scenes and
/// reports the maximum relative error per loss.
inline std::vector<GradCheckResult> gradient_check(const GradCheckSpec& spec) {
    require_valid(spec.shape, "gradient_check");
    if (spec.instances < 1) throw ValidationError("gradient_check: need at least one instance");
    if (spec.categories < 1 || spec.queries < 1 || spec.embedding_dim < 1 || spec.hidden_dim < 1)
        throw ValidationError("gradient_check: dimensions must be positive");
    if (spec.gt_count < 1 || spec.gt_count > spec.queries || spec.gt_count > spec.categories)
        throw ValidationError("gradient_check: gt count must fit within queries and categories");
    if (!(spec.step > 0)) throw ValidationError("gradient_check: step must be positive");
    const LossWeights w;
    const CostWeights cw = CostWeights::from(w);
    detail::GradAccum focal_acc, dice_acc, mask_acc, avc_acc, cls_acc, soas_acc, seg_acc,
        fwd_acc, head_ind_acc, head_sim_acc;

    for (int inst = 0; inst < spec.instances; ++inst) {
        Rng rng(mix_seed(spec.seed, 0x6AD0000ULL + static_cast<std::uint64_t>(inst)));
        detail::RandomScene scene = detail::random_scene(rng, spec);
        const GroundTruthSegment& gt0 = scene.gts.front();

        // per-mask losses: gradients w.r.t. the soft mask / map values
        {
            SoftMask pred = scene.preds[0].mask;
            const PixelLoss f = focal_loss(pred, gt0.mask, w.focal_gamma, w.focal_alpha, w.epsilon);
            const PixelLoss d = dice_loss(pred, gt0.mask, w.epsilon);
            const PixelLoss ml = mask_loss(pred, gt0.mask, w);
            for (std::size_t p = 0; p < pred.pixels.size(); ++p) {
                const double x = pred.pixels[p];
                auto set = [&](double v) { pred.pixels[p] = v; };
                focal_acc.add(f.grad[p],
                              detail::central_diff(x, spec.step, set,
                                                   [&] {
                                                       return focal_loss(pred, gt0.mask, w.focal_gamma,
                                                                         w.focal_alpha, w.epsilon)
                                                           .value;
                                                   }),
                              spec.min_magnitude);
                dice_acc.add(d.grad[p],
                             detail::central_diff(
                                 x, spec.step, set,
                                 [&] { return dice_loss(pred, gt0.mask, w.epsilon).value; }),
                             spec.min_magnitude);
                mask_acc.add(ml.grad[p],
                             detail::central_diff(x, spec.step, set,
                                                  [&] { return mask_loss(pred, gt0.mask, w).value; }),
                             spec.min_magnitude);
            }
        }
        {
            LocalizationMap map(spec.shape);
            for (double& v : map.values) v = rng.uniform(0.02, 0.98);
            const BinaryMask target = detail::random_binary_mask(rng, spec.shape, 0.5);
            const PixelLoss a = avc_loss(map, target, w.epsilon);
            for (std::size_t p = 0; p < map.values.size(); ++p) {
                const double x = map.values[p];
                avc_acc.add(a.grad[p],
                            detail::central_diff(
                                x, spec.step, [&](double v) { map.values[p] = v; },
                                [&] { return avc_loss(map, target, w.epsilon).value; }),
                            spec.min_magnitude);
            }
        }

        // scene losses: gradients w.r.t. mask and class logits, fixed matching
        const MatchingIndex idx = match(scene.preds, scene.gts, cw);
        const SceneLoss mc = mask_cls_loss(scene.preds, scene.gts, idx, w);
        const SoasLoss so = soas_loss(scene.preds, idx, scene.gts, w.epsilon);
        const SegmentationLoss seg = segmentation_loss(scene.preds, scene.gts, idx, w);
        for (int i = 0; i < spec.queries; ++i) {
            for (int p = 0; p < spec.shape.pixel_count(); ++p) {
                const double x = scene.mask_logits[i][p];
                auto set = [&](double v) {
                    scene.mask_logits[i][p] = v;
                    scene.preds[i].mask.pixels[p] = sigmoid(v);
                };
                cls_acc.add(mc.mask_logit_grads[i][p],
                            detail::central_diff(x, spec.step, set,
                                                 [&] {
                                                     return mask_cls_loss(scene.preds, scene.gts,
                                                                          idx, w)
                                                         .value;
                                                 }),
                            spec.min_magnitude);
                soas_acc.add(so.mask_logit_grads[i][p],
                             detail::central_diff(x, spec.step, set,
                                                  [&] {
                                                      return soas_loss(scene.preds, idx, scene.gts,
                                                                       w.epsilon)
                                                          .value;
                                                  }),
                             spec.min_magnitude);
                seg_acc.add(seg.mask_logit_grads[i][p],
                            detail::central_diff(x, spec.step, set,
                                                 [&] {
                                                     return segmentation_loss(scene.preds, scene.gts,
                                                                              idx, w)
                                                         .value;
                                                 }),
                            spec.min_magnitude);
            }
            for (int k = 0; k <= spec.categories; ++k) {
                const double x = scene.class_logits[i][k];
                auto set = [&](double v) {
                    scene.class_logits[i][k] = v;
                    scene.preds[i].scores.probs = softmax(scene.class_logits[i]);
                };
                cls_acc.add(mc.class_logit_grads[i][k],
                            detail::central_diff(x, spec.step, set,
                                                 [&] {
                                                     return mask_cls_loss(scene.preds, scene.gts,
                                                                          idx, w)
                                                         .value;
                                                 }),
                            spec.min_magnitude);
                seg_acc.add(seg.class_logit_grads[i][k],
                            detail::central_diff(x, spec.step, set,
                                                 [&] {
                                                     return segmentation_loss(scene.preds, scene.gts,
                                                                              idx, w)
                                                         .value;
                                                 }),
                            spec.min_magnitude);
            }
            detail::refresh_pred(scene, i);
        }

        // audio head: direct forward jacobian, then the full stage-2 chain
        for (AudioMode mode : {AudioMode::Independent, AudioMode::Simplex}) {
            AudioHead head = detail::random_head(rng, spec, mode);
            AudioEmbedding emb(static_cast<std::size_t>(spec.embedding_dim));
            for (double& v : emb) v = rng.uniform(-1.0, 1.0);

            // d probs[k] / d param via one-hot seeds
            {
                const AudioForwardTape tape = audio_forward_tape(head, emb);
                std::vector<AudioHeadGradients> jac;
                for (int k = 0; k < spec.categories; ++k) {
                    AudioHeadGradients g(head);
                    std::vector<double> seed_vec(spec.categories, 0.0);
                    seed_vec[k] = 1.0;
                    audio_backward(head, tape, seed_vec, g);
                    jac.push_back(std::move(g));
                }
                auto check_param = [&](double* ptr, const std::vector<const std::vector<double>*>& rows,
                                       std::size_t j) {
                    const double x = *ptr;
                    for (int k = 0; k < spec.categories; ++k) {
                        const double fd = detail::central_diff(
                            x, spec.step, [&](double v) { *ptr = v; },
                            [&] { return audio_forward(head, emb).probs[k]; });
                        fwd_acc.add((*rows[k])[j], fd, spec.min_magnitude);
                    }
                };
                for (std::size_t j = 0; j < head.w1.size(); ++j) {
                    std::vector<const std::vector<double>*> rows;
                    for (int k = 0; k < spec.categories; ++k) rows.push_back(&jac[k].w1);
                    check_param(&head.w1[j], rows, j);
                }
                for (std::size_t j = 0; j < head.b2.size(); ++j) {
                    std::vector<const std::vector<double>*> rows;
                    for (int k = 0; k < spec.categories; ++k) rows.push_back(&jac[k].b2);
                    check_param(&head.b2[j], rows, j);
                }
            }

            // full chain: head -> composition -> correspondence loss
            const std::vector<PotentialInstance> instances = detail::disjoint_instances(rng, spec);
            const BinaryMask target = detail::random_binary_mask(rng, spec.shape, 0.5);
            auto chain_value = [&]() {
                const AudioDistribution dist = audio_forward(head, emb);
                const LocalizationMap map = compose_localization(instances, dist, spec.shape);
                return avc_loss(map, target, w.epsilon).value;
            };
            const AudioForwardTape tape = audio_forward_tape(head, emb);
            const ComposeTape ct =
                compose_localization_tape(instances, AudioDistribution{tape.probs}, spec.shape);
            const PixelLoss a = avc_loss(ct.map, target, w.epsilon);
            const std::vector<double> dprobs =
                compose_backward(ct, instances, a.grad, spec.categories);
            AudioHeadGradients g(head);
            audio_backward(head, tape, dprobs, g);
            detail::GradAccum& acc = mode == AudioMode::Independent ? head_ind_acc : head_sim_acc;
            auto sweep = [&](std::vector<double>& params, const std::vector<double>& grads) {
                for (std::size_t j = 0; j < params.size(); ++j) {
                    const double x = params[j];
                    acc.add(grads[j],
                            detail::central_diff(
                                x, spec.step, [&](double v) { params[j] = v; }, chain_value),
                            spec.min_magnitude);
                }
            };
            sweep(head.w1, g.w1);
            sweep(head.b1, g.b1);
            sweep(head.w2, g.w2);
            sweep(head.b2, g.b2);
        }
    }

    return {
        GradCheckResult{"focal", focal_acc.max_rel, focal_acc.entries},
        GradCheckResult{"dice", dice_acc.max_rel, dice_acc.entries},
        GradCheckResult{"mask", mask_acc.max_rel, mask_acc.entries},
        GradCheckResult{"avc", avc_acc.max_rel, avc_acc.entries},
        GradCheckResult{"mask_cls", cls_acc.max_rel, cls_acc.entries},
        GradCheckResult{"soas", soas_acc.max_rel, soas_acc.entries},
        GradCheckResult{"segmentation", seg_acc.max_rel, seg_acc.entries},
        GradCheckResult{"audio_forward", fwd_acc.max_rel, fwd_acc.entries},
        GradCheckResult{"audio_head_independent", head_ind_acc.max_rel, head_ind_acc.entries},
        GradCheckResult{"audio_head_simplex", head_sim_acc.max_rel, head_sim_acc.entries},
    };
}

}  // namespace avseg
