#include "asd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <utility>

#include "asd/eval.hpp"
#include "asd/png.hpp"

namespace asd {

Histogram compute_histogram(const std::vector<double>& values, double lo, double hi,
                            std::size_t bins) {
  if (bins == 0) throw std::runtime_error("histogram needs at least one bin");
  if (hi < lo) throw std::runtime_error("histogram range is inverted");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  const double width = hi - lo;
  for (double v : values) {
    if (v < lo || v > hi) continue;
    std::size_t idx = 0;
    if (width > 0.0) {
      idx = static_cast<std::size_t>((v - lo) / width * static_cast<double>(bins));
      if (idx >= bins) idx = bins - 1;  // v == hi
    }
    ++h.counts[idx];
  }
  return h;
}

namespace {

const Rgb kWhite{255, 255, 255};
const Rgb kInk{30, 30, 30};
const Rgb kGrid{225, 225, 228};
const Rgb kStageLine{190, 190, 200};
const Rgb kBlue{46, 110, 184};
const Rgb kRed{198, 60, 50};
const Rgb kPurple{120, 80, 170};

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

double nice_step(double span, int target_ticks) {
  if (span <= 0) return 1.0;
  const double raw = span / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

double round_up_to_step(double v, double step) { return std::ceil(v / step - 1e-9) * step; }

// Maps data coordinates into a pixel box with label margins.
struct Frame {
  int left = 70, right = 620, top = 44, bottom = 366;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  int px(double x) const {
    return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
  }
  int py(double y) const {
    return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  }
};

void draw_frame(Canvas& c, const Frame& f, const std::string& title, const std::string& xlabel,
                int x_digits, int y_digits) {
  c.text((c.width() - Canvas::text_width(title, 2)) / 2, 12, title, kInk, 2);
  const double ystep = nice_step(f.ymax - f.ymin, 5);
  for (double v = f.ymin; v <= f.ymax + 1e-9; v += ystep) {
    const int y = f.py(v);
    c.line(f.left, y, f.right, y, kGrid);
    const std::string lab = fmt(v, y_digits);
    c.text(f.left - 8 - Canvas::text_width(lab), y - 3, lab, kInk);
  }
  const double xstep = nice_step(f.xmax - f.xmin, 6);
  for (double v = round_up_to_step(f.xmin, xstep); v <= f.xmax + 1e-9; v += xstep) {
    const int x = f.px(v);
    c.line(x, f.top, x, f.bottom, kGrid);
    const std::string lab = fmt(v, x_digits);
    c.text(x - Canvas::text_width(lab) / 2, f.bottom + 8, lab, kInk);
  }
  c.line(f.left, f.top, f.left, f.bottom, kInk);
  c.line(f.left, f.bottom, f.right, f.bottom, kInk);
  c.text((f.left + f.right - Canvas::text_width(xlabel)) / 2, f.bottom + 24, xlabel, kInk);
}

void blend_rect(Canvas& c, int x, int y, int w, int h, Rgb color, double alpha) {
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) {
      const Rgb base = c.get(xx, yy);
      auto mix = [&](unsigned char b, unsigned char o) {
        return static_cast<unsigned char>(std::lround((1.0 - alpha) * b + alpha * o));
      };
      c.set(xx, yy, Rgb{mix(base.r, color.r), mix(base.g, color.g), mix(base.b, color.b)});
    }
}

void draw_legend(Canvas& c, const Frame& f,
                 const std::vector<std::pair<std::string, Rgb>>& items) {
  int x = f.left + 12;
  const int y = f.top + 8;
  for (const auto& [label, color] : items) {
    c.fill_rect(x, y, 10, 10, color);
    c.text(x + 14, y + 2, label, kInk);
    x += 14 + Canvas::text_width(label) + 26;
  }
}

std::string render_loss_hist(const std::filesystem::path& plots_dir, int epoch,
                             const std::vector<double>& clean,
                             const std::vector<double>& poisoned) {
  const std::size_t bins = 40;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto* pop : {&clean, &poisoned})
    for (double v : *pop) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  if (first) throw std::runtime_error("loss dump epoch has no rows");
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const Histogram hc = compute_histogram(clean, lo, hi, bins);
  const Histogram hp = compute_histogram(poisoned, lo, hi, bins);
  std::size_t peak = 1;
  for (std::size_t i = 0; i < bins; ++i) peak = std::max({peak, hc.counts[i], hp.counts[i]});

  Frame f;
  f.xmin = lo;
  f.xmax = hi;
  f.ymin = 0.0;
  const double ystep = nice_step(static_cast<double>(peak), 5);
  f.ymax = round_up_to_step(static_cast<double>(peak), ystep);

  Canvas canvas(640, 420, kWhite);
  draw_frame(canvas, f, "LOSS DISTRIBUTION - EPOCH " + std::to_string(epoch),
             "PER-SAMPLE LOSS", 2, 0);
  const double bin_w = (hi - lo) / static_cast<double>(bins);
  auto draw_bars = [&](const Histogram& h, Rgb color) {
    for (std::size_t i = 0; i < bins; ++i) {
      if (h.counts[i] == 0) continue;
      const int x0 = f.px(lo + static_cast<double>(i) * bin_w);
      const int x1 = f.px(lo + static_cast<double>(i + 1) * bin_w);
      const int top = f.py(static_cast<double>(h.counts[i]));
      blend_rect(canvas, x0, top, std::max(1, x1 - x0), f.bottom - top, color, 0.55);
    }
  };
  draw_bars(hc, kBlue);
  draw_bars(hp, kRed);
  draw_legend(canvas, f, {{"CLEAN", kBlue}, {"POISONED", kRed}});

  const std::string path =
      (plots_dir / ("loss-dist-epoch-" + std::to_string(epoch) + ".png")).string();
  write_png(path, canvas);
  return path;
}

struct Series {
  std::string label;
  Rgb color;
  std::vector<double> x, y;
};

std::string render_curves(const std::string& path, const std::string& title,
                          double ymin, double ymax, const std::vector<Series>& series,
                          const std::vector<double>& vlines, int y_digits) {
  double xmin = 0.0, xmax = 0.0;
  bool first = true;
  for (const auto& s : series)
    for (double v : s.x) {
      xmin = first ? v : std::min(xmin, v);
      xmax = first ? v : std::max(xmax, v);
      first = false;
    }
  if (first) throw std::runtime_error("curve plot has no points");
  if (xmax - xmin < 1e-12) {
    xmin -= 1.0;
    xmax += 1.0;
  }

  Frame f;
  f.xmin = xmin;
  f.xmax = xmax;
  f.ymin = ymin;
  f.ymax = ymax;

  Canvas canvas(640, 420, kWhite);
  draw_frame(canvas, f, title, "EPOCH", 0, y_digits);
  for (double v : vlines) canvas.line(f.px(v), f.top, f.px(v), f.bottom, kStageLine);
  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
      canvas.line(f.px(s.x[i]), f.py(s.y[i]), f.px(s.x[i + 1]), f.py(s.y[i + 1]), s.color);
    for (std::size_t i = 0; i < s.x.size(); ++i)
      canvas.fill_rect(f.px(s.x[i]) - 1, f.py(s.y[i]) - 1, 3, 3, s.color);
  }
  std::vector<std::pair<std::string, Rgb>> legend;
  for (const auto& s : series) legend.emplace_back(s.label, s.color);
  draw_legend(canvas, f, legend);
  write_png(path, canvas);
  return path;
}

}  // namespace

std::vector<std::string> render_plots(const std::string& run_dir, const std::string& kind) {
  const bool all = kind == "all";
  if (!all && kind != "loss-dist" && kind != "curves" && kind != "purity")
    throw std::runtime_error("unknown plot kind: " + kind +
                             " (expected loss-dist, curves, purity, or all)");
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  const fs::path plots_dir = dir / "plots";
  fs::create_directories(plots_dir);
  std::vector<std::string> written;

  auto require = [](const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing plot input: " + p.string());
    return p.string();
  };

  if (all || kind == "loss-dist") {
    const auto rows = read_loss_distribution(require(dir / "losses.tsv"));
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_epoch;
    for (const auto& r : rows)
      (r.is_poisoned ? by_epoch[r.epoch].second : by_epoch[r.epoch].first).push_back(r.loss);
    for (const auto& [epoch, populations] : by_epoch)
      written.push_back(
          render_loss_hist(plots_dir, epoch, populations.first, populations.second));
  }

  if (all || kind == "curves") {
    const auto records = read_metrics(require(dir / "metrics.tsv"));
    if (records.empty())
      throw std::runtime_error("metrics file has no rows: " + (dir / "metrics.tsv").string());
    Series acc{"ACC %", kBlue, {}, {}};
    Series asr{"ASR %", kRed, {}, {}};
    std::vector<double> stage_changes;
    for (std::size_t i = 0; i < records.size(); ++i) {
      acc.x.push_back(records[i].epoch);
      acc.y.push_back(records[i].acc * 100.0);
      asr.x.push_back(records[i].epoch);
      asr.y.push_back(records[i].asr * 100.0);
      if (i > 0 && records[i].stage != records[i - 1].stage)
        stage_changes.push_back(records[i].epoch);
    }
    written.push_back(render_curves((plots_dir / "acc-asr.png").string(),
                                    "ACCURACY AND ATTACK SUCCESS RATE", 0.0, 100.0,
                                    {acc, asr}, stage_changes, 0));
  }

  if (all || kind == "purity") {
    const auto rows = read_pool_snapshot(require(dir / "pools.tsv"));
    std::map<int, std::pair<std::uint64_t, std::uint64_t>> per_epoch;  // |D_C|, poisoned in D_C
    for (const auto& r : rows)
      if (r.pool == 'C') {
        ++per_epoch[r.epoch].first;
        per_epoch[r.epoch].second += r.is_poisoned ? 1 : 0;
      }
    if (per_epoch.empty())
      throw std::runtime_error("pool snapshot has no clean-pool rows: " +
                               (dir / "pools.tsv").string());
    Series purity{"POISONED IN CLEAN POOL %", kPurple, {}, {}};
    double top = 0.0;
    for (const auto& [epoch, counts] : per_epoch) {
      const double pct =
          counts.first ? 100.0 * static_cast<double>(counts.second) /
                             static_cast<double>(counts.first)
                       : 0.0;
      purity.x.push_back(epoch);
      purity.y.push_back(pct);
      top = std::max(top, pct);
    }
    double ymax = std::max(5.0, 1.25 * top);
    ymax = round_up_to_step(ymax, nice_step(ymax, 5));
    written.push_back(render_curves((plots_dir / "pool-purity.png").string(),
                                    "CLEAN POOL PURITY", 0.0, ymax, {purity}, {}, 1));
  }

  return written;
}

}  // namespace asd
