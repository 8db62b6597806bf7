#include "travmap/eval.hpp"

#include <vector>

#include <nlohmann/json.hpp>

#include "travmap/errors.hpp"
#include "travmap/parallel.hpp"

namespace travmap {

ConfusionStats confusion(const LabelGrid& pred, const LabelGrid& gt, int threads) {
  if (!(pred.spec == gt.spec)) throw GridSpecMismatch();

  const std::size_t n = pred.labels.size();
  const std::size_t chunks = parallel_chunk_count(n);
  std::vector<ConfusionStats> partial(chunks);

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    ConfusionStats& s = partial[begin / kParallelChunk];
    for (std::size_t v = begin; v < end; ++v) {
      const TravLabel p = pred.labels[v];
      const TravLabel g = gt.labels[v];
      const bool p_occ = p != TravLabel::Unoccupied;
      const bool g_occ = g != TravLabel::Unoccupied;
      if (p_occ && g_occ) ++s.tp_occ;
      else if (p_occ && !g_occ) ++s.fp_occ;
      else if (!p_occ && g_occ) ++s.fn_occ;
      else ++s.tn_occ;

      if (p_occ) {
        const auto pc = std::size_t(p);
        if (p == g) ++s.tp[pc];
        else ++s.fp[pc];
      }
      if (g_occ && g != p) ++s.fn[std::size_t(g)];
    }
  });

  ConfusionStats total;
  for (const ConfusionStats& s : partial) {
    total.tp_occ += s.tp_occ;
    total.fp_occ += s.fp_occ;
    total.fn_occ += s.fn_occ;
    total.tn_occ += s.tn_occ;
    for (int c = 0; c < 3; ++c) {
      total.tp[c] += s.tp[c];
      total.fp[c] += s.fp[c];
      total.fn[c] += s.fn[c];
    }
  }
  return total;
}

double iou_occ(const ConfusionStats& stats) {
  const std::uint64_t den = stats.tp_occ + stats.fp_occ + stats.fn_occ;
  if (den == 0) throw UndefinedMetric("occupancy IoU undefined: no occupied voxel in either grid");
  return double(stats.tp_occ) / double(den);
}

bool class_defined(const ConfusionStats& stats, TravLabel c) {
  const auto i = std::size_t(c);
  return stats.tp[i] + stats.fp[i] + stats.fn[i] > 0;
}

double iou_class(const ConfusionStats& stats, TravLabel c) {
  if (c == TravLabel::Unoccupied) throw UndefinedMetric("Unoccupied is not a scored class");
  if (!class_defined(stats, c)) {
    throw UndefinedMetric(std::string("class ") + label_char(c) +
                          " absent from both grids");
  }
  const auto i = std::size_t(c);
  return double(stats.tp[i]) / double(stats.tp[i] + stats.fp[i] + stats.fn[i]);
}

double miou(const ConfusionStats& stats) {
  double sum = 0.0;
  int defined = 0;
  for (const TravLabel c : {TravLabel::Traversable, TravLabel::PotentiallyTraversable,
                            TravLabel::NonTraversable}) {
    if (!class_defined(stats, c)) continue;
    sum += iou_class(stats, c);
    ++defined;
  }
  if (defined == 0) throw UndefinedMetric("no traversability class present in either grid");
  return sum / double(defined);
}

std::string metrics_json(const ConfusionStats& stats) {
  nlohmann::json j;
  const std::uint64_t occ_den = stats.tp_occ + stats.fp_occ + stats.fn_occ;
  j["iou_occ"] = occ_den > 0 ? nlohmann::json(iou_occ(stats)) : nlohmann::json(nullptr);
  const char* keys[3] = {"iou_T", "iou_P", "iou_N"};
  const TravLabel classes[3] = {TravLabel::Traversable, TravLabel::PotentiallyTraversable,
                                TravLabel::NonTraversable};
  int defined = 0;
  for (int c = 0; c < 3; ++c) {
    if (class_defined(stats, classes[c])) {
      j[keys[c]] = iou_class(stats, classes[c]);
      ++defined;
    } else {
      j[keys[c]] = nullptr;
    }
  }
  j["miou"] = defined > 0 ? nlohmann::json(miou(stats)) : nlohmann::json(nullptr);
  j["counts"] = {
      {"tp_occ", stats.tp_occ},
      {"fp_occ", stats.fp_occ},
      {"fn_occ", stats.fn_occ},
      {"tn_occ", stats.tn_occ},
      {"tp", {stats.tp[0], stats.tp[1], stats.tp[2]}},
      {"fp", {stats.fp[0], stats.fp[1], stats.fp[2]}},
      {"fn", {stats.fn[0], stats.fn[1], stats.fn[2]}},
  };
  return j.dump(2);
}

}  // namespace travmap
