#pragma once

#include <cstdint>
#include <string>

#include "travmap/label.hpp"

namespace travmap {

// Occupancy and per-class agreement counts between a predicted and a
// ground-truth label grid. Occupancy treats {T, P, N} as occupied and
// Unoccupied as free. Per class c: TP = both grids say c; FP = prediction
// says c, ground truth says anything else (occupied or not); FN = ground
// truth says c, prediction says anything else.
struct ConfusionStats {
  std::uint64_t tp_occ = 0, fp_occ = 0, fn_occ = 0, tn_occ = 0;
  std::uint64_t tp[3] = {0, 0, 0};  // indexed by TravLabel value (T, P, N)
  std::uint64_t fp[3] = {0, 0, 0};
  std::uint64_t fn[3] = {0, 0, 0};
};

// Throws GridSpecMismatch when the two grids disagree on extent/voxel/dims.
ConfusionStats confusion(const LabelGrid& pred, const LabelGrid& gt, int threads = 0);

// TP / (TP + FP + FN) over occupancy. Throws UndefinedMetric when the
// denominator is zero (both grids fully unoccupied).
double iou_occ(const ConfusionStats& stats);

// Whether class c appears in either grid (denominator > 0).
bool class_defined(const ConfusionStats& stats, TravLabel c);

// TP_c / (TP_c + FP_c + FN_c). Throws UndefinedMetric for a class absent
// from both grids; c must be T, P or N.
double iou_class(const ConfusionStats& stats, TravLabel c);

// Unweighted mean of the defined per-class IoUs; undefined classes are
// excluded. Throws UndefinedMetric when no class is defined.
double miou(const ConfusionStats& stats);

// JSON report: iou_occ, iou_T/iou_P/iou_N (number or null when undefined),
// miou, and the raw counts.
std::string metrics_json(const ConfusionStats& stats);

}  // namespace travmap
