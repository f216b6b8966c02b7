#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace asd {

/// Equal-width binning over [lo, hi]. Values outside the range are dropped;
/// a value equal to hi lands in the last bin. A degenerate range (hi == lo)
/// counts exact matches into bin 0.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

Histogram compute_histogram(const std::vector<double>& values, double lo, double hi,
                            std::size_t bins);

/// Renders one plot family from artifacts inside run_dir into run_dir/plots.
/// Kinds: "loss-dist" (per-epoch clean/poisoned loss histograms from
/// losses.tsv), "curves" (accuracy + attack success rate per epoch from
/// metrics.tsv), "purity" (poisoned fraction of the clean pool per epoch from
/// pools.tsv), "all". Returns the image paths written; a missing input file
/// raises an error naming it.
std::vector<std::string> render_plots(const std::string& run_dir, const std::string& kind);

}  // namespace asd
