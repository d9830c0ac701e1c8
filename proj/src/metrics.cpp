#include "zdcfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "zdcfm/rng.hpp"

namespace zdcfm {

ChannelVector extract_channels(const uint16_t* px, int H, int W, const ChannelConvention& conv) {
    ChannelVector ch{};
    int hh = H / 2, hw = W / 2;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            int64_t v = px[static_cast<int64_t>(r) * W + c];
            bool even = ((r + c) & 1) == 0;
            if (even == conv.quadrants_take_even) {
                int q = (r < hh ? 0 : 2) + (c < hw ? 0 : 1);
                ch[static_cast<size_t>(q)] += v;
            } else {
                ch[4] += v;
            }
        }
    return ch;
}

ChannelVector extract_channels(const Dataset& ds, int64_t i, const ChannelConvention& conv) {
    return extract_channels(ds.image(i), ds.height, ds.width, conv);
}

std::vector<ChannelVector> extract_all_channels(const Dataset& ds, const ChannelConvention& conv) {
    std::vector<ChannelVector> out(static_cast<size_t>(ds.size()));
    for (int64_t i = 0; i < ds.size(); ++i) out[static_cast<size_t>(i)] = extract_channels(ds, i, conv);
    return out;
}

// Exact W1 between two empirical distributions. Both quantile functions are
// piecewise constant with breakpoints on the 1/(n*m) grid, so the integral is
// a finite sum walked with integer arithmetic.
double wasserstein1(const std::vector<double>& a_in, const std::vector<double>& b_in) {
    if (a_in.empty() || b_in.empty()) throw std::runtime_error("wasserstein1: empty sample set");
    std::vector<double> a = a_in, b = b_in;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    int64_t n = static_cast<int64_t>(a.size());
    int64_t m = static_cast<int64_t>(b.size());
    // positions in units of 1/(n*m); sample i of a covers (i*m, (i+1)*m]
    int64_t i = 0, j = 0, cur = 0;
    double acc = 0.0;
    while (i < n && j < m) {
        int64_t next_a = (i + 1) * m;
        int64_t next_b = (j + 1) * n;
        int64_t next = std::min(next_a, next_b);
        acc += static_cast<double>(next - cur) * std::fabs(a[static_cast<size_t>(i)] - b[static_cast<size_t>(j)]);
        cur = next;
        if (next == next_a) ++i;
        if (next == next_b) ++j;
    }
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

double wasserstein1_channels(const std::vector<ChannelVector>& w, const std::vector<ChannelVector>& w_hat) {
    if (w.empty() || w_hat.empty()) throw std::runtime_error("wasserstein1_channels: empty set");
    double total = 0.0;
    for (int c = 0; c < kNumChannels; ++c) {
        std::vector<double> a(w.size()), b(w_hat.size());
        for (size_t i = 0; i < w.size(); ++i) a[i] = static_cast<double>(w[i][static_cast<size_t>(c)]);
        for (size_t i = 0; i < w_hat.size(); ++i) b[i] = static_cast<double>(w_hat[i][static_cast<size_t>(c)]);
        total += wasserstein1(a, b);
    }
    return total / kNumChannels;
}

double mae_channels_once(const std::vector<ChannelVector>& w, const std::vector<ChannelVector>& w_hat) {
    if (w.size() != w_hat.size()) throw std::runtime_error("mae_channels: index mismatch");
    if (w.empty()) throw std::runtime_error("mae_channels: empty set");
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i)
        for (int c = 0; c < kNumChannels; ++c)
            acc += std::fabs(static_cast<double>(w[i][static_cast<size_t>(c)]) -
                             static_cast<double>(w_hat[i][static_cast<size_t>(c)]));
    return acc / static_cast<double>(w.size());
}

double mae_channels(const std::vector<ChannelVector>& w,
                    const std::function<std::vector<ChannelVector>(uint64_t)>& sampler, int runs,
                    uint64_t seed) {
    if (runs < 1) throw std::runtime_error("mae_channels: runs must be positive");
    double acc = 0.0;
    for (int r = 0; r < runs; ++r) {
        std::vector<ChannelVector> w_hat = sampler(seed_combine(seed, static_cast<uint64_t>(r)));
        acc += mae_channels_once(w, w_hat);
    }
    return acc / runs;
}

double original_baseline_wasserstein(const std::vector<ChannelVector>& test, uint64_t seed, int runs) {
    if (test.size() < 2) throw std::runtime_error("original_baseline_wasserstein: need at least 2 samples");
    double acc = 0.0;
    for (int r = 0; r < runs; ++r) {
        std::vector<int> idx(test.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        Rng rng(seed_combine(seed, static_cast<uint64_t>(r)));
        rng.shuffle(idx);
        size_t half = test.size() / 2;
        std::vector<ChannelVector> a, b;
        a.reserve(half);
        b.reserve(half);
        for (size_t i = 0; i < half; ++i) a.push_back(test[static_cast<size_t>(idx[i])]);
        for (size_t i = half; i < 2 * half; ++i) b.push_back(test[static_cast<size_t>(idx[i])]);
        acc += wasserstein1_channels(a, b);
    }
    return acc / runs;
}

namespace {
uint64_t row_key(const float* row) {
    uint64_t h = 0x84222325cbf29ce4ull;
    for (int f = 0; f < kNumFeatures; ++f) {
        uint32_t bits;
        std::memcpy(&bits, &row[f], 4);
        h = seed_combine(h, bits);
    }
    return h;
}
}  // namespace

double original_baseline_mae(const Dataset& ds, const std::vector<int>& test_indices, uint64_t seed,
                             int runs, const ChannelConvention& conv) {
    std::map<uint64_t, std::vector<int>> groups;
    for (int i : test_indices) groups[row_key(ds.feature_row(i))].push_back(i);

    bool any_pair = false;
    for (const auto& [k, g] : groups)
        if (g.size() >= 2) any_pair = true;
    if (!any_pair) throw std::runtime_error("original_baseline_mae: no duplicate-feature pairs in test set");

    double acc = 0.0;
    for (int r = 0; r < runs; ++r) {
        Rng rng(seed_combine(seed, static_cast<uint64_t>(r)));
        std::vector<ChannelVector> a, b;
        for (auto& [k, g] : groups) {
            if (g.size() < 2) continue;
            std::vector<int> order = g;
            rng.shuffle(order);
            for (size_t i = 0; i + 1 < order.size(); i += 2) {
                a.push_back(extract_channels(ds, order[i], conv));
                b.push_back(extract_channels(ds, order[i + 1], conv));
            }
        }
        acc += mae_channels_once(a, b);
    }
    return acc / runs;
}

ChannelHistograms emit_histograms(const std::vector<ChannelVector>& original,
                                  const std::vector<ChannelVector>& generated, int bins) {
    if (original.empty() || generated.empty()) throw std::runtime_error("emit_histograms: empty set");
    if (bins < 1) throw std::runtime_error("emit_histograms: bins must be positive");
    ChannelHistograms h;
    h.bins = bins;
    for (int c = 0; c < kNumChannels; ++c) {
        double lo = static_cast<double>(original[0][static_cast<size_t>(c)]);
        double hi = lo;
        auto extend = [&](const std::vector<ChannelVector>& v) {
            for (const auto& cv : v) {
                double x = static_cast<double>(cv[static_cast<size_t>(c)]);
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        };
        extend(original);
        extend(generated);
        if (hi <= lo) hi = lo + 1.0;
        auto& edges = h.edges[static_cast<size_t>(c)];
        edges.resize(static_cast<size_t>(bins) + 1);
        for (int b = 0; b <= bins; ++b) edges[static_cast<size_t>(b)] = lo + (hi - lo) * b / bins;
        auto fill = [&](const std::vector<ChannelVector>& v, std::vector<int64_t>& counts) {
            counts.assign(static_cast<size_t>(bins), 0);
            for (const auto& cv : v) {
                double x = static_cast<double>(cv[static_cast<size_t>(c)]);
                int b = static_cast<int>((x - lo) / (hi - lo) * bins);
                b = std::clamp(b, 0, bins - 1);
                ++counts[static_cast<size_t>(b)];
            }
        };
        fill(original, h.count_original[static_cast<size_t>(c)]);
        fill(generated, h.count_generated[static_cast<size_t>(c)]);
    }
    return h;
}

void histograms_csv(const ChannelHistograms& h, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "channel,bin_lo,bin_hi,count_original,count_generated\n";
    for (int c = 0; c < kNumChannels; ++c) {
        const auto& e = h.edges[static_cast<size_t>(c)];
        for (int b = 0; b < h.bins; ++b)
            f << (c + 1) << "," << e[static_cast<size_t>(b)] << "," << e[static_cast<size_t>(b) + 1] << ","
              << h.count_original[static_cast<size_t>(c)][static_cast<size_t>(b)] << ","
              << h.count_generated[static_cast<size_t>(c)][static_cast<size_t>(b)] << "\n";
    }
}

}  // namespace zdcfm
