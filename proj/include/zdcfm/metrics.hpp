#pragma once

// Evaluation metrics over the five readout channels: exact one-dimensional
// Wasserstein-1 between empirical distributions, per-example MAE, the
// original-data baselines (split-half and duplicate-pair), and histogram
// emission for channel-level comparison plots.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zdcfm/data.hpp"

namespace zdcfm {

constexpr int kNumChannels = 5;
using ChannelVector = std::array<int64_t, kNumChannels>;

// Channels 1-4: quadrant sums over pixels with (row+col) even; channel 5: the
// whole-area sum over pixels with (row+col) odd (each channel reads every
// second fiber). The parity convention is a configurable constant.
struct ChannelConvention {
    bool quadrants_take_even = true;
};

ChannelVector extract_channels(const uint16_t* pixels, int height, int width,
                               const ChannelConvention& conv = {});
ChannelVector extract_channels(const Dataset& ds, int64_t i, const ChannelConvention& conv = {});
std::vector<ChannelVector> extract_all_channels(const Dataset& ds, const ChannelConvention& conv = {});

// Mean over channels of the exact W1 distance between the empirical
// distributions; unequal sizes handled by piecewise-constant quantile
// integration on the common 1/(n*m) grid.
double wasserstein1(const std::vector<double>& a, const std::vector<double>& b);
double wasserstein1_channels(const std::vector<ChannelVector>& w, const std::vector<ChannelVector>& w_hat);

// (1/n) sum_k sum_i |w_i^k - what_i^k| over index-paired responses
double mae_channels_once(const std::vector<ChannelVector>& w, const std::vector<ChannelVector>& w_hat);

// Averages mae_channels_once over `runs` generation runs; the sampler is
// called with (run_seed) and must return responses for the same rows as w.
double mae_channels(const std::vector<ChannelVector>& w,
                    const std::function<std::vector<ChannelVector>(uint64_t)>& sampler, int runs,
                    uint64_t seed);

// Random half vs half of the test set, averaged over `runs` splits.
double original_baseline_wasserstein(const std::vector<ChannelVector>& test, uint64_t seed, int runs = 5);

// MAE over pairs of test rows with bit-identical feature vectors, averaged
// over `runs` pairings. Throws if no duplicate-feature pair exists.
double original_baseline_mae(const Dataset& ds, const std::vector<int>& test_indices, uint64_t seed,
                             int runs = 5, const ChannelConvention& conv = {});

// Per-channel histograms of original vs generated values on shared edges.
struct ChannelHistograms {
    int bins;
    std::array<std::vector<double>, kNumChannels> edges;
    std::array<std::vector<int64_t>, kNumChannels> count_original;
    std::array<std::vector<int64_t>, kNumChannels> count_generated;
};

ChannelHistograms emit_histograms(const std::vector<ChannelVector>& original,
                                  const std::vector<ChannelVector>& generated, int bins);
void histograms_csv(const ChannelHistograms& h, const std::string& path);

}  // namespace zdcfm
