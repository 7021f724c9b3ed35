// metrics.hpp - benchmark metrics: Jaccard index, F-score with beta^2,
// and dataset-level aggregation including the silent-frame protocol.
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "avseg/mask.hpp"

namespace avseg {

/// F = (1 + b2) * p * r / (b2 * p + r), with F = 0 when both precision
/// and recall vanish. For p = r the value is p for any beta.
inline double fscore(double precision, double recall, double beta2) {
    const double den = beta2 * precision + recall;
    if (den == 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / den;
}

struct FrameEval {
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
    bool predicted_empty = false;
};

/// Per-frame metrics. Empty denominators score as perfect: an empty
/// prediction has precision 1, an empty ground truth has recall 1, and
/// empty-vs-empty is a perfect frame, which makes correct silence
/// score 1.0 under the silent protocol.
inline FrameEval frame_eval(const BinaryMask& pred, const BinaryMask& gt, double beta2 = 0.3) {
    require_same_shape(pred.shape, gt.shape, "frame_eval");
    long inter = 0, pred_area = 0, gt_area = 0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        inter += (pred.pixels[i] & gt.pixels[i]);
        pred_area += pred.pixels[i];
        gt_area += gt.pixels[i];
    }
    FrameEval out;
    out.jaccard = iou(pred, gt);
    out.precision = pred_area == 0 ? 1.0 : static_cast<double>(inter) / pred_area;
    out.recall = gt_area == 0 ? 1.0 : static_cast<double>(inter) / gt_area;
    out.fscore = fscore(out.precision, out.recall, beta2);
    out.predicted_empty = pred_area == 0;
    return out;
}

struct DatasetReport {
    double mean_jaccard = 0.0;   // macro: averaged over frames
    double mean_fscore = 0.0;
    double micro_jaccard = 0.0;  // micro: from pixel counts pooled over frames
    double micro_fscore = 0.0;
    std::optional<double> silent_miou;             // only when silent frames exist
    std::optional<double> recognition_accuracy;    // fraction of silent frames predicted empty
    long frame_count = 0;
};

/// Aggregates frame pairs (prediction, ground truth). Silent statistics
/// cover only the frames whose ground truth is empty: recognition counts
/// a frame correct iff the prediction is empty, and silent mIoU is the
/// fraction of pixels left unsegmented.
inline DatasetReport dataset_eval(const std::vector<std::pair<BinaryMask, BinaryMask>>& frames,
                                  double beta2 = 0.3) {
    if (frames.empty()) throw ValidationError("dataset_eval: empty frame list");
    DatasetReport rep;
    rep.frame_count = static_cast<long>(frames.size());
    long inter_sum = 0, union_sum = 0, pred_sum = 0, gt_sum = 0;
    long silent_frames = 0, silent_correct = 0;
    double silent_background = 0.0;
    for (const auto& [pred, gt] : frames) {
        const FrameEval fe = frame_eval(pred, gt, beta2);
        rep.mean_jaccard += fe.jaccard;
        rep.mean_fscore += fe.fscore;
        require_same_shape(pred.shape, gt.shape, "dataset_eval");
        long pa = 0;
        for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
            inter_sum += (pred.pixels[i] & gt.pixels[i]);
            union_sum += (pred.pixels[i] | gt.pixels[i]);
            pa += pred.pixels[i];
            gt_sum += gt.pixels[i];
        }
        pred_sum += pa;
        if (area(gt) == 0) {
            ++silent_frames;
            if (fe.predicted_empty) ++silent_correct;
            silent_background +=
                1.0 - static_cast<double>(pa) / static_cast<double>(gt.shape.pixel_count());
        }
    }
    rep.mean_jaccard /= static_cast<double>(frames.size());
    rep.mean_fscore /= static_cast<double>(frames.size());
    rep.micro_jaccard =
        union_sum == 0 ? 1.0 : static_cast<double>(inter_sum) / static_cast<double>(union_sum);
    const double micro_p =
        pred_sum == 0 ? 1.0 : static_cast<double>(inter_sum) / static_cast<double>(pred_sum);
    const double micro_r =
        gt_sum == 0 ? 1.0 : static_cast<double>(inter_sum) / static_cast<double>(gt_sum);
    rep.micro_fscore = fscore(micro_p, micro_r, beta2);
    if (silent_frames > 0) {
        rep.silent_miou = silent_background / static_cast<double>(silent_frames);
        rep.recognition_accuracy =
            static_cast<double>(silent_correct) / static_cast<double>(silent_frames);
    }
    return rep;
}

}  // namespace avseg
