#pragma once

// Dataset container ("ZDC1" format), preprocessing, the synthetic shower
// oracle used in place of full Monte-Carlo data, and dataset statistics.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "zdcfm/rng.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

constexpr int kNumFeatures = 9;
inline const std::array<const char*, kNumFeatures> kFeatureNames = {"E",  "vx", "vy", "vz", "px",
                                                                    "py", "pz", "m",  "q"};

enum class Detector { ZN, ZP, T16 };

struct DetectorDims {
    int height;
    int width;
};

DetectorDims detector_dims(Detector d);
const char* detector_name(Detector d);
Detector detector_from_name(const std::string& s);

struct Dataset {
    Detector detector = Detector::ZN;
    int height = 0;
    int width = 0;
    std::vector<float> features;    // n x 9, row-major
    std::vector<uint16_t> images;   // n x height x width

    int64_t size() const {
        return features.empty() ? 0 : static_cast<int64_t>(features.size()) / kNumFeatures;
    }
    const float* feature_row(int64_t i) const { return features.data() + i * kNumFeatures; }
    const uint16_t* image(int64_t i) const { return images.data() + i * height * width; }
    int64_t pixels() const { return static_cast<int64_t>(height) * width; }
};

// ---- container io ----

void save_zdc(const std::string& path, const Dataset& ds);
Dataset load_zdc(const std::string& path);

// ---- pixel transform: y = ln(1+x), x = round(max(0, exp(y)-1)) ----

void log_transform(const uint16_t* pixels, float* out, int64_t n);
void inverse_transform(const float* values, uint16_t* out, int64_t n);
int64_t inverse_pixel(float v);  // single-value inverse, clamped at 0

// ---- feature standardization ----

struct PreprocStats {
    std::array<double, kNumFeatures> mean{};
    std::array<double, kNumFeatures> stddev{};
    std::array<bool, kNumFeatures> constant{};  // flagged features had zero variance; std forced to 1
    bool log_transform = true;
};

PreprocStats compute_stats(const Dataset& ds, const std::vector<int>& train_indices);
void standardize(const float* row, const PreprocStats& s, float* out);
void unstandardize(const float* row, const PreprocStats& s, float* out);

// ---- splits ----

struct DatasetSplit {
    std::vector<int> train, val, test;
    uint64_t seed = 0;
};

// 70/10/20, deterministic under seed; n must be >= 10
DatasetSplit split_dataset(int64_t n, uint64_t seed);

// ---- synthetic oracle ----

struct ParticleType {
    const char* name;
    float mass;
    float charge;
    double fraction;
};

const std::vector<ParticleType>& particle_table();

struct SynthConfig {
    // feature distributions
    double energy_log_mean = 3.6889;  // ln(40)
    double energy_log_sigma = 0.7;
    double energy_min = 4.0;
    double energy_max = 800.0;
    double vertex_xy_sigma = 0.4;
    double vertex_z_sigma = 2.0;
    double angle_sigma = 0.003;
    // shower shape (coefficients relative to ZN geometry, scaled by H/44, W/44)
    double center_vertex_coeff = -1.5;
    double center_angle_coeff = -900.0;
    double sigma_photon = 0.05;   // blob sigma as a fraction of H
    double sigma_hadron = 0.08;
    double sigma_col_ratio = 1.15;
    double amp_per_gev = 3.0;
    // diversity
    double diversity_mix = 0.3;        // fraction of particles with per-draw jitter
    double jitter_center_frac = 0.08;  // jitter sigma as a fraction of H / W
    double jitter_amp_sigma = 0.25;    // lognormal sigma of the amplitude jitter
    // duplicated-feature pool (guarantees identical-feature pairs for the MAE baseline)
    double repeat_fraction = 0.15;
    int64_t repeat_pool_size = 0;  // 0: max(8, n/256)
    int64_t min_photons = 10;
};

// Shower intensity for one particle: lambda(r,c), a closed-form anisotropic
// Gaussian. Exposed so tests can Monte-Carlo against the exact mean.
struct ShowerParams {
    double center_row, center_col, sigma_row, sigma_col, amplitude;
    bool high_diversity;
};
ShowerParams shower_params(const float* feature_row, Detector det, const SynthConfig& cfg);
double shower_lambda(const ShowerParams& p, int r, int c);

Dataset synth_generate(Detector det, int64_t n, uint64_t seed, const SynthConfig& cfg = {});

// Draw one response for an existing feature row (independent shower draw);
// used by the oracle-resampling checks and the duplicate-pair machinery.
std::vector<uint16_t> synth_draw_image(const float* feature_row, Detector det, const SynthConfig& cfg,
                                       Rng& rng);

// ---- statistics ----

struct DatasetStatsReport {
    int64_t total = 0;
    int64_t unique_features = 0;
    std::vector<std::pair<std::string, double>> type_proportions;
    // per-feature histograms: bins edges (size bins+1) and counts (size bins)
    int bins = 40;
    std::array<std::vector<double>, kNumFeatures> edges;
    std::array<std::vector<int64_t>, kNumFeatures> counts;
};

DatasetStatsReport dataset_stats(const Dataset& ds, int bins = 40);
std::string stats_to_json(const DatasetStatsReport& r);
void stats_histograms_csv(const DatasetStatsReport& r, const std::string& path);

}  // namespace zdcfm
