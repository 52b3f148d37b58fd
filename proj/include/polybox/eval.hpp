#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "polybox/geometry.hpp"

// Poly-IoU-based detection matching, precision-recall curves, per-class AP
// and mAP (all-point interpolation).

namespace polybox {

struct Detection {
  std::string image_id;
  int class_id = 0;
  double score = 0.0;
  PolyBox box;
};

struct GroundTruthRecord {
  std::string image_id;
  int class_id = 0;
  PolyBox box;
  bool matched = false;
};

struct ImageInfo {
  std::string id;
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  std::vector<ImageInfo> images;
  std::vector<GroundTruthRecord> annotations;
};

struct MatchResult {
  std::vector<std::size_t> order;  // detection indices, descending score (stable)
  std::vector<bool> is_tp;         // aligned with order
};

// Greedy matching: in descending-score order, each detection takes the
// unmatched same-class same-image GT with highest poly_iou, if that IoU
// clears the threshold. Consumed GTs turn later duplicates into FPs.
inline MatchResult match_detections(const std::vector<Detection>& dets,
                                    std::vector<GroundTruthRecord> gts, double iou_threshold,
                                    int grid_w, int grid_h) {
  if (iou_threshold <= 0.0 || iou_threshold >= 1.0)
    throw std::invalid_argument("match_detections: iou_threshold must be in (0,1)");

  MatchResult res;
  res.order.resize(dets.size());
  std::iota(res.order.begin(), res.order.end(), std::size_t{0});
  std::stable_sort(res.order.begin(), res.order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  res.is_tp.resize(dets.size(), false);
  for (std::size_t n = 0; n < res.order.size(); ++n) {
    const Detection& d = dets[res.order[n]];
    double best_iou = 0.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].matched || gts[g].class_id != d.class_id || gts[g].image_id != d.image_id)
        continue;
      const double iou = poly_iou(d.box, gts[g].box, grid_w, grid_h);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = g;
      }
    }
    if (best_gt < gts.size() && best_iou >= iou_threshold) {
      gts[best_gt].matched = true;
      res.is_tp[n] = true;
    }
  }
  return res;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

inline std::vector<PrPoint> precision_recall_curve(const std::vector<bool>& tp_labels,
                                                   long n_gt) {
  std::vector<PrPoint> curve;
  long tp = 0;
  for (std::size_t i = 0; i < tp_labels.size(); ++i) {
    if (tp_labels[i]) ++tp;
    const double prec = static_cast<double>(tp) / static_cast<double>(i + 1);
    const double rec = n_gt > 0 ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0;
    curve.push_back({rec, prec});
  }
  return curve;
}

// All-point interpolated AP: area under the PR curve after taking the
// monotone precision envelope.
inline double average_precision(const std::vector<bool>& tp_labels, long n_gt) {
  if (n_gt <= 0) return 0.0;
  auto curve = precision_recall_curve(tp_labels, n_gt);
  // envelope from the right
  for (std::size_t i = curve.size(); i-- > 1;) {
    curve[i - 1].precision = std::max(curve[i - 1].precision, curve[i].precision);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& p : curve) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

struct EvalReport {
  double map = 0.0;
  double iou_threshold = 0.5;
  std::map<int, double> per_class_ap;
  std::map<int, std::vector<PrPoint>> per_class_curve;
};

// mAP over classes with at least one GT. Evaluation IoU uses each image's
// own grid dimensions from the manifest.
inline EvalReport mean_ap(const std::vector<Detection>& dets, const DatasetManifest& manifest,
                          double iou_threshold = 0.5) {
  if (manifest.annotations.empty()) throw std::invalid_argument("mean_ap: no ground truth");

  std::map<std::string, ImageInfo> dims;
  for (const auto& im : manifest.images) dims[im.id] = im;

  std::map<int, std::vector<Detection>> dets_by_class;
  std::map<int, std::vector<GroundTruthRecord>> gts_by_class;
  for (const auto& d : dets) dets_by_class[d.class_id].push_back(d);
  for (const auto& g : manifest.annotations) gts_by_class[g.class_id].push_back(g);

  EvalReport report;
  report.iou_threshold = iou_threshold;
  double ap_sum = 0.0;
  int n_classes = 0;
  for (const auto& [cls, gts] : gts_by_class) {
    const auto& cls_dets = dets_by_class[cls];
    // match per image to pick up each image's grid
    std::vector<bool> labels;
    std::vector<double> scores;
    {
      // global descending-score order across the class
      std::vector<std::size_t> order(cls_dets.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cls_dets[a].score > cls_dets[b].score;
      });
      std::vector<GroundTruthRecord> pool = gts;
      for (std::size_t n : order) {
        const Detection& d = cls_dets[n];
        auto it = dims.find(d.image_id);
        const int w = it != dims.end() ? it->second.width : 1;
        const int h = it != dims.end() ? it->second.height : 1;
        double best_iou = 0.0;
        std::size_t best_gt = pool.size();
        for (std::size_t g = 0; g < pool.size(); ++g) {
          if (pool[g].matched || pool[g].image_id != d.image_id) continue;
          const double iou = poly_iou(d.box, pool[g].box, w, h);
          if (iou > best_iou) {
            best_iou = iou;
            best_gt = g;
          }
        }
        const bool tp = best_gt < pool.size() && best_iou >= iou_threshold;
        if (tp) pool[best_gt].matched = true;
        labels.push_back(tp);
        scores.push_back(d.score);
      }
    }
    const double ap = average_precision(labels, static_cast<long>(gts.size()));
    report.per_class_ap[cls] = ap;
    report.per_class_curve[cls] = precision_recall_curve(labels, static_cast<long>(gts.size()));
    ap_sum += ap;
    ++n_classes;
  }
  report.map = n_classes > 0 ? ap_sum / n_classes : 0.0;
  return report;
}

}  // namespace polybox
