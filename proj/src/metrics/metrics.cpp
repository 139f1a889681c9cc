#include "pseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "pseg/error.hpp"

namespace pseg {
namespace {

void check_same_shape(const BinaryMask2D& a, const BinaryMask2D& b, const char* op) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ValidationError(std::string(op) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                          std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                          std::to_string(b.height()) + ")");
  }
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(const std::optional<double>& v, int decimals) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

std::optional<double> percent(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return *v * 100.0;
}

}  // namespace

ConfusionCounts confusion(const BinaryMask2D& gt, const BinaryMask2D& pred) {
  check_same_shape(gt, pred, "confusion");
  ConfusionCounts c;
  const auto& g = gt.labels();
  const auto& p = pred.labels();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i]) {
      (p[i] ? c.tp : c.fn)++;
    } else {
      (p[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

std::optional<double> tpr(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }

std::optional<double> tnr(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }

std::optional<double> dsc(const ConfusionCounts& c) {
  // |G| = tp + fn, |P| = tp + fp
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}

std::optional<double> dsc(const BinaryMask2D& gt, const BinaryMask2D& pred) {
  check_same_shape(gt, pred, "dsc");
  return dsc(confusion(gt, pred));
}

std::vector<PixelPoint> foreground_points(const BinaryMask2D& mask) {
  std::vector<PixelPoint> pts;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) pts.push_back({x, y});
    }
  }
  return pts;
}

double directed_hausdorff(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b) {
  if (a.empty() || b.empty()) throw ValidationError("directed_hausdorff: point sets must be non-empty");
  // Squared integer distances are exact; one sqrt at the end.
  std::int64_t worst = 0;
  for (const auto& p : a) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& q : b) {
      const std::int64_t dx = p.x - q.x;
      const std::int64_t dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
      if (best <= worst) break;  // cannot raise the running max
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(static_cast<double>(worst));
}

std::optional<double> hausdorff(const BinaryMask2D& gt, const BinaryMask2D& pred) {
  check_same_shape(gt, pred, "hausdorff");
  const auto a = foreground_points(gt);
  const auto b = foreground_points(pred);
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::nullopt;
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

EvalRecord evaluate_pair(const std::string& slice_id, const BinaryMask2D& gt, const BinaryMask2D& pred) {
  const ConfusionCounts c = confusion(gt, pred);
  return {slice_id, tpr(c), tnr(c), dsc(c), hausdorff(gt, pred)};
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValidationError("summarize: no records");
  struct Mean {
    double sum = 0;
    std::size_t count = 0;
    void add(const std::optional<double>& v) {
      if (v) {
        sum += *v;
        ++count;
      }
    }
    std::optional<double> get(double factor) const {
      if (count == 0) return std::nullopt;
      return sum / static_cast<double>(count) * factor;
    }
  };
  Mean t, n, d, h;
  EvalSummary s;
  s.n = records.size();
  for (const auto& r : records) {
    t.add(r.tpr);
    n.add(r.tnr);
    d.add(r.dsc);
    h.add(r.hd);
    if (!r.tpr || !r.tnr || !r.dsc || !r.hd) ++s.skipped;
  }
  s.mean_tpr = t.get(100.0);
  s.mean_tnr = n.get(100.0);
  s.mean_dsc = d.get(100.0);
  s.mean_hd = h.get(1.0);
  return s;
}

std::string format_report_csv(const std::vector<EvalRecord>& records, const EvalSummary& summary) {
  std::ostringstream out;
  out << "slice_id,tpr,tnr,dsc,hd_px\n";
  for (const auto& r : records) {
    out << r.slice_id << ',' << fixed(percent(r.tpr), 3) << ',' << fixed(percent(r.tnr), 3) << ','
        << fixed(percent(r.dsc), 3) << ',' << fixed(r.hd, 3) << '\n';
  }
  out << "MEAN," << fixed(summary.mean_tpr, 1) << ',' << fixed(summary.mean_tnr, 1) << ','
      << fixed(summary.mean_dsc, 1) << ',' << fixed(summary.mean_hd, 1) << '\n';
  return out.str();
}

}  // namespace pseg
