// losses.hpp - training objectives with hand-derived gradients.
//
// Per-mask losses (focal, dice, avc) report gradients with respect to
// their direct pixel inputs. Scene-level losses (mask_cls, soas,
// segmentation) report gradients with respect to the underlying
// parameterization: class logits through softmax and mask logits through
// sigmoid. Both Jacobians are functions of the probabilities alone, so
// the logits themselves never need to be passed in.
#pragma once

#include <cmath>
#include <vector>

#include "avseg/instance.hpp"
#include "avseg/mask.hpp"

namespace avseg {

struct LossWeights {
    double lambda_focal = 20.0;
    double lambda_dice = 1.0;
    double lambda_soas = 1.0;
    double no_object_weight = 0.1;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double epsilon = 1e-6;  // guards denominators and logarithms

    void validate() const {
        if (lambda_focal < 0 || lambda_dice < 0 || lambda_soas < 0 || no_object_weight < 0 ||
            focal_gamma < 0 || focal_alpha < 0)
            throw ValidationError("LossWeights: weights must be non-negative");
        if (!(epsilon > 0)) throw ValidationError("LossWeights: epsilon must be positive");
    }
};

/// A scalar loss over one pixel grid, with d value / d pixel.
struct PixelLoss {
    double value = 0.0;
    std::vector<double> grad;
};

/// A scalar loss over a whole prediction set. Gradient grids are indexed
/// by prediction; untouched entries stay zero.
struct SceneLoss {
    double value = 0.0;
    std::vector<std::vector<double>> mask_logit_grads;   // per prediction, H*W
    std::vector<std::vector<double>> class_logit_grads;  // per prediction, K+1
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
    double hi = logits.front();
    for (double v : logits) hi = std::max(hi, v);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - hi);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

// Clamp convention shared by every log-bearing loss: values at or beyond
// the clamp boundary carry zero gradient, so a prediction pinned exactly
// at the clamped optimum reports a vanishing gradient.
inline double clamp_unit(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }
inline bool clamp_active(double p, double eps) { return p <= eps || p >= 1.0 - eps; }

// x^gamma with fast paths for the exponents that actually occur.
inline double pow_gamma(double x, double gamma) {
    if (gamma == 2.0) return x * x;
    if (gamma == 1.0) return x;
    if (gamma == 0.0) return 1.0;
    return std::pow(x, gamma);
}

}  // namespace detail

/// Alpha-balanced focal loss in its binary (sigmoid) form, averaged over
/// pixels. With gamma = 0 and alpha = 0.5 it reduces to half the binary
/// cross-entropy.
inline PixelLoss focal_loss(const SoftMask& pred, const BinaryMask& gt, double gamma, double alpha,
                            double eps = 1e-6) {
    require_same_shape(pred.shape, gt.shape, "focal_loss");
    const double inv_n = 1.0 / static_cast<double>(pred.shape.pixel_count());
    PixelLoss out;
    out.grad.assign(pred.pixels.size(), 0.0);
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const double raw = pred.pixels[i];
        const double p = detail::clamp_unit(raw, eps);
        double term, dterm;
        if (gt.pixels[i]) {
            const double q = 1.0 - p;
            const double lp = std::log(p);
            term = -alpha * detail::pow_gamma(q, gamma) * lp;
            dterm = alpha * gamma * detail::pow_gamma(q, gamma - 1.0) * lp -
                    alpha * detail::pow_gamma(q, gamma) / p;
        } else {
            const double lq = std::log(1.0 - p);
            term = -(1.0 - alpha) * detail::pow_gamma(p, gamma) * lq;
            dterm = -(1.0 - alpha) * gamma * detail::pow_gamma(p, gamma - 1.0) * lq +
                    (1.0 - alpha) * detail::pow_gamma(p, gamma) / (1.0 - p);
        }
        out.value += term * inv_n;
        out.grad[i] = detail::clamp_active(raw, eps) ? 0.0 : dterm * inv_n;
    }
    return out;
}

/// Dice loss: 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
inline PixelLoss dice_loss(const SoftMask& pred, const BinaryMask& gt, double eps = 1e-6) {
    require_same_shape(pred.shape, gt.shape, "dice_loss");
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        inter += pred.pixels[i] * gt.pixels[i];
        sum_p += pred.pixels[i];
        sum_g += gt.pixels[i];
    }
    const double num = 2.0 * inter + eps;
    const double den = sum_p + sum_g + eps;
    PixelLoss out;
    out.value = 1.0 - num / den;
    out.grad.assign(pred.pixels.size(), 0.0);
    const double den2 = den * den;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i)
        out.grad[i] = -(2.0 * gt.pixels[i] * den - num) / den2;
    return out;
}

/// Binary mask loss: lambda_f * focal + lambda_d * dice.
inline PixelLoss mask_loss(const SoftMask& pred, const BinaryMask& gt, const LossWeights& w) {
    PixelLoss f = focal_loss(pred, gt, w.focal_gamma, w.focal_alpha, w.epsilon);
    PixelLoss d = dice_loss(pred, gt, w.epsilon);
    PixelLoss out;
    out.value = w.lambda_focal * f.value + w.lambda_dice * d.value;
    out.grad.resize(f.grad.size());
    for (std::size_t i = 0; i < f.grad.size(); ++i)
        out.grad[i] = w.lambda_focal * f.grad[i] + w.lambda_dice * d.grad[i];
    return out;
}

/// Mean per-pixel binary cross-entropy between a localization map and the
/// ground-truth mask, with the map clamped to [eps, 1-eps].
inline PixelLoss bce_map_loss(const std::vector<double>& map_values, const BinaryMask& gt,
                              double eps = 1e-6) {
    if (map_values.size() != gt.pixels.size())
        throw ValidationError("bce_map_loss: map size does not match mask shape");
    const double inv_n = 1.0 / static_cast<double>(gt.pixels.size());
    PixelLoss out;
    out.grad.assign(map_values.size(), 0.0);
    for (std::size_t i = 0; i < map_values.size(); ++i) {
        const double raw = map_values[i];
        const double s = detail::clamp_unit(raw, eps);
        if (gt.pixels[i]) {
            out.value += -std::log(s) * inv_n;
            out.grad[i] = detail::clamp_active(raw, eps) ? 0.0 : -inv_n / s;
        } else {
            out.value += -std::log(1.0 - s) * inv_n;
            out.grad[i] = detail::clamp_active(raw, eps) ? 0.0 : inv_n / (1.0 - s);
        }
    }
    return out;
}

namespace detail {

inline void chain_through_sigmoid(const SoftMask& prob, const std::vector<double>& dprob,
                                  std::vector<double>& dlogit_out) {
    dlogit_out.resize(dprob.size());
    for (std::size_t i = 0; i < dprob.size(); ++i) {
        const double m = prob.pixels[i];
        dlogit_out[i] = dprob[i] * m * (1.0 - m);
    }
}

}  // namespace detail

/// Matched-pair classification + mask loss. Sums, over matched pairs,
/// -log p(c_gt) + mask_loss, and over unmatched predictions a
/// down-weighted -log p(no-object). Class-logit gradients use the
/// softmax identity p - onehot(target).
inline SceneLoss mask_cls_loss(const std::vector<InstancePrediction>& preds,
                               const std::vector<GroundTruthSegment>& gts, const MatchingIndex& idx,
                               const LossWeights& w) {
    require_consistent(idx, static_cast<int>(preds.size()), static_cast<int>(gts.size()),
                       "mask_cls_loss");
    SceneLoss out;
    out.mask_logit_grads.resize(preds.size());
    out.class_logit_grads.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out.mask_logit_grads[i].assign(preds[i].mask.pixels.size(), 0.0);
        out.class_logit_grads[i].assign(preds[i].scores.probs.size(), 0.0);
    }
    for (auto [g, i] : idx.pairs) {
        const InstancePrediction& pred = preds[i];
        const GroundTruthSegment& gt = gts[g];
        const int k1 = static_cast<int>(pred.scores.probs.size());
        if (gt.category < 0 || gt.category >= k1 - 1)
            throw ValidationError("mask_cls_loss: gt category out of range");
        const double p_c = std::max(pred.scores.probs[gt.category], w.epsilon);
        out.value += -std::log(p_c);
        for (int k = 0; k < k1; ++k)
            out.class_logit_grads[i][k] =
                pred.scores.probs[k] - (k == gt.category ? 1.0 : 0.0);
        PixelLoss ml = mask_loss(pred.mask, gt.mask, w);
        out.value += ml.value;
        detail::chain_through_sigmoid(pred.mask, ml.grad, out.mask_logit_grads[i]);
    }
    for (int i : idx.unmatched) {
        const InstancePrediction& pred = preds[i];
        const int k1 = static_cast<int>(pred.scores.probs.size());
        const double p_no = std::max(pred.scores.probs[k1 - 1], w.epsilon);
        out.value += w.no_object_weight * -std::log(p_no);
        for (int k = 0; k < k1; ++k)
            out.class_logit_grads[i][k] =
                w.no_object_weight * (pred.scores.probs[k] - (k == k1 - 1 ? 1.0 : 0.0));
    }
    return out;
}

/// Silent object-aware loss: the summed soft IoU between every unmatched
/// prediction's mask and the union of ground-truth masks. Driving it down
/// moves spare query masks off the annotated foreground while leaving
/// them free to settle on unannotated (potentially silent) objects.
/// With no ground truth there is no foreground to avoid; the loss is
/// zero with zero gradient and `no_foreground` is set.
struct SoasLoss : SceneLoss {
    bool no_foreground = false;
};

inline SoasLoss soas_loss(const std::vector<InstancePrediction>& preds, const MatchingIndex& idx,
                          const std::vector<GroundTruthSegment>& gts, double eps = 1e-6) {
    require_consistent(idx, static_cast<int>(preds.size()), static_cast<int>(gts.size()),
                       "soas_loss");
    SoasLoss out;
    out.mask_logit_grads.resize(preds.size());
    out.class_logit_grads.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out.mask_logit_grads[i].assign(preds[i].mask.pixels.size(), 0.0);
        out.class_logit_grads[i].assign(preds[i].scores.probs.size(), 0.0);
    }
    if (gts.empty()) {
        out.no_foreground = true;
        return out;
    }
    std::vector<BinaryMask> gt_masks;
    gt_masks.reserve(gts.size());
    for (const GroundTruthSegment& g : gts) gt_masks.push_back(g.mask);
    const BinaryMask fg = union_all(gt_masks);
    for (int i : idx.unmatched) {
        const SoftMask& m = preds[i].mask;
        require_same_shape(m.shape, fg.shape, "soas_loss");
        double inter = 0.0, uni = 0.0;
        for (std::size_t px = 0; px < m.pixels.size(); ++px) {
            const double v = m.pixels[px];
            if (fg.pixels[px]) {
                inter += v;
                uni += 1.0;
            } else {
                uni += v;
            }
        }
        const double den = uni + eps;
        out.value += inter / den;
        std::vector<double> dmask(m.pixels.size());
        const double den2 = den * den;
        for (std::size_t px = 0; px < m.pixels.size(); ++px) {
            // d inter = u, d union = 1-u per pixel
            dmask[px] = fg.pixels[px] ? 1.0 / den : -inter / den2;
        }
        detail::chain_through_sigmoid(m, dmask, out.mask_logit_grads[i]);
    }
    return out;
}

/// Stage-1 objective: mask_cls + lambda_soas * soas, composed exactly so
/// the decomposition holds bit for bit.
struct SegmentationLoss : SceneLoss {
    double mask_cls_value = 0.0;
    double soas_value = 0.0;
    bool no_foreground = false;
};

inline SegmentationLoss segmentation_loss(const std::vector<InstancePrediction>& preds,
                                          const std::vector<GroundTruthSegment>& gts,
                                          const MatchingIndex& idx, const LossWeights& w) {
    SceneLoss mc = mask_cls_loss(preds, gts, idx, w);
    SoasLoss so = soas_loss(preds, idx, gts, w.epsilon);
    SegmentationLoss out;
    out.mask_cls_value = mc.value;
    out.soas_value = so.value;
    out.no_foreground = so.no_foreground;
    out.value = mc.value + w.lambda_soas * so.value;
    out.mask_logit_grads = std::move(mc.mask_logit_grads);
    out.class_logit_grads = std::move(mc.class_logit_grads);
    for (std::size_t i = 0; i < out.mask_logit_grads.size(); ++i)
        for (std::size_t px = 0; px < out.mask_logit_grads[i].size(); ++px)
            out.mask_logit_grads[i][px] += w.lambda_soas * so.mask_logit_grads[i][px];
    return out;
}

}  // namespace avseg
