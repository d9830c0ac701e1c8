#include "zdcfm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "nlohmann/json.hpp"
#include "zdcfm/binio.hpp"

using json = nlohmann::json;

namespace zdcfm {

DetectorDims detector_dims(Detector d) {
    switch (d) {
        case Detector::ZN: return {44, 44};
        case Detector::ZP: return {56, 30};
        case Detector::T16: return {16, 16};
    }
    throw std::runtime_error("unknown detector");
}

const char* detector_name(Detector d) {
    switch (d) {
        case Detector::ZN: return "ZN";
        case Detector::ZP: return "ZP";
        case Detector::T16: return "T16";
    }
    throw std::runtime_error("unknown detector");
}

Detector detector_from_name(const std::string& s) {
    if (s == "ZN") return Detector::ZN;
    if (s == "ZP") return Detector::ZP;
    if (s == "T16") return Detector::T16;
    throw std::runtime_error("unknown detector tag: " + s);
}

// ---- ZDC1 container ----
// magic "ZDC1" | u64 header length | JSON header | features f32 | images u16 | u64 fnv1a

void save_zdc(const std::string& path, const Dataset& ds) {
    DetectorDims dims = detector_dims(ds.detector);
    if (ds.height != dims.height || ds.width != dims.width)
        throw std::runtime_error("save_zdc: image dims do not match detector tag");
    int64_t n = ds.size();
    if (static_cast<int64_t>(ds.images.size()) != n * ds.pixels())
        throw std::runtime_error("save_zdc: feature/image row count mismatch");

    json header = {
        {"detector", detector_name(ds.detector)},
        {"n", n},
        {"height", ds.height},
        {"width", ds.width},
        {"feature_names", kFeatureNames},
        {"features_dtype", "f32"},
        {"images_dtype", "u16"},
        {"features_offset", 0},
        {"images_offset", n * kNumFeatures * 4},
    };
    std::string hs = header.dump();

    ByteWriter w;
    w.str("ZDC1");
    w.u64(hs.size());
    w.str(hs);
    w.bytes(ds.features.data(), ds.features.size() * sizeof(float));
    w.bytes(ds.images.data(), ds.images.size() * sizeof(uint16_t));
    w.write_file_with_checksum(path);
}

Dataset load_zdc(const std::string& path) {
    ByteReader r = ByteReader::from_file_checked(path);
    if (r.str(4) != "ZDC1") throw std::runtime_error("not a ZDC1 file: " + path);
    uint64_t hlen = r.u64();
    json header = json::parse(r.str(hlen));

    Dataset ds;
    ds.detector = detector_from_name(header.at("detector").get<std::string>());
    ds.height = header.at("height").get<int>();
    ds.width = header.at("width").get<int>();
    DetectorDims dims = detector_dims(ds.detector);
    if (ds.height != dims.height || ds.width != dims.width)
        throw std::runtime_error("load_zdc: image dims do not match detector tag");
    int64_t n = header.at("n").get<int64_t>();
    if (n < 0) throw std::runtime_error("load_zdc: negative row count");

    ds.features.resize(static_cast<size_t>(n * kNumFeatures));
    ds.images.resize(static_cast<size_t>(n * ds.pixels()));
    r.bytes(ds.features.data(), ds.features.size() * sizeof(float));
    r.bytes(ds.images.data(), ds.images.size() * sizeof(uint16_t));
    if (r.pos != r.buf.size()) throw std::runtime_error("load_zdc: trailing bytes in payload");
    return ds;
}

// ---- transforms ----

void log_transform(const uint16_t* pixels, float* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = std::log1p(static_cast<float>(pixels[i]));
}

int64_t inverse_pixel(float v) {
    double x = std::expm1(static_cast<double>(v));
    if (!(x > 0.0)) return 0;
    return static_cast<int64_t>(std::llround(x));
}

void inverse_transform(const float* values, uint16_t* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        int64_t x = inverse_pixel(values[i]);
        out[i] = static_cast<uint16_t>(std::min<int64_t>(x, 65535));
    }
}

// ---- standardization ----

PreprocStats compute_stats(const Dataset& ds, const std::vector<int>& train_indices) {
    if (train_indices.empty()) throw std::runtime_error("compute_stats: empty train split");
    PreprocStats s;
    for (int f = 0; f < kNumFeatures; ++f) {
        double mean = 0.0;
        for (int i : train_indices) mean += ds.feature_row(i)[f];
        mean /= static_cast<double>(train_indices.size());
        double var = 0.0;
        for (int i : train_indices) {
            double d = ds.feature_row(i)[f] - mean;
            var += d * d;
        }
        var /= static_cast<double>(train_indices.size());
        s.mean[static_cast<size_t>(f)] = mean;
        if (var <= 0.0) {
            s.stddev[static_cast<size_t>(f)] = 1.0;
            s.constant[static_cast<size_t>(f)] = true;
        } else {
            s.stddev[static_cast<size_t>(f)] = std::sqrt(var);
        }
    }
    return s;
}

void standardize(const float* row, const PreprocStats& s, float* out) {
    for (int f = 0; f < kNumFeatures; ++f)
        out[f] = static_cast<float>((row[f] - s.mean[static_cast<size_t>(f)]) / s.stddev[static_cast<size_t>(f)]);
}

void unstandardize(const float* row, const PreprocStats& s, float* out) {
    for (int f = 0; f < kNumFeatures; ++f)
        out[f] = static_cast<float>(row[f] * s.stddev[static_cast<size_t>(f)] + s.mean[static_cast<size_t>(f)]);
}

// ---- splits ----

DatasetSplit split_dataset(int64_t n, uint64_t seed) {
    if (n < 10) throw std::runtime_error("split_dataset: need at least 10 examples");
    std::vector<int> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<int>(i);
    Rng rng(seed_combine(seed, 0x5317ull));
    rng.shuffle(idx);
    int64_t n_train = (n * 7) / 10;
    int64_t n_val = n / 10;
    DatasetSplit sp;
    sp.seed = seed;
    sp.train.assign(idx.begin(), idx.begin() + n_train);
    sp.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    sp.test.assign(idx.begin() + n_train + n_val, idx.end());
    return sp;
}

// ---- synthetic oracle ----

const std::vector<ParticleType>& particle_table() {
    static const std::vector<ParticleType> table = {
        {"photon", 0.0f, 0.0f, 0.570},  {"neutron", 0.9396f, 0.0f, 0.235}, {"proton", 0.9383f, 1.0f, 0.065},
        {"lambda", 1.1157f, 0.0f, 0.045}, {"kaon0", 0.4976f, 0.0f, 0.042},  {"pion+", 0.1396f, 1.0f, 0.023},
        {"pion-", 0.1396f, -1.0f, 0.012}, {"kaon+", 0.4937f, 1.0f, 0.008},
    };
    return table;
}

namespace {

void draw_features(Rng& rng, const SynthConfig& cfg, float* row) {
    const auto& table = particle_table();
    double u = rng.uniform();
    size_t ti = 0;
    double acc = 0.0;
    for (size_t i = 0; i < table.size(); ++i) {
        acc += table[i].fraction;
        if (u < acc) {
            ti = i;
            break;
        }
        ti = i;
    }
    double m = table[ti].mass;
    double q = table[ti].charge;
    double E = std::clamp(rng.lognormal(cfg.energy_log_mean, cfg.energy_log_sigma), cfg.energy_min,
                          cfg.energy_max);
    double vx = rng.normal(0.0, cfg.vertex_xy_sigma);
    double vy = rng.normal(0.0, cfg.vertex_xy_sigma);
    double vz = rng.normal(0.0, cfg.vertex_z_sigma);
    double p = std::sqrt(std::max(E * E - m * m, 1e-2));
    double tx = rng.normal(0.0, cfg.angle_sigma);
    double ty = rng.normal(0.0, cfg.angle_sigma);
    double pz = p * std::sqrt(std::max(1.0 - tx * tx - ty * ty, 0.0));
    row[0] = static_cast<float>(E);
    row[1] = static_cast<float>(vx);
    row[2] = static_cast<float>(vy);
    row[3] = static_cast<float>(vz);
    row[4] = static_cast<float>(p * tx);
    row[5] = static_cast<float>(p * ty);
    row[6] = static_cast<float>(pz);
    row[7] = static_cast<float>(m);
    row[8] = static_cast<float>(q);
}

uint64_t feature_hash(const float* row) {
    uint64_t h = 0x9e3779b97f4a7c15ull;
    for (int f = 0; f < kNumFeatures; ++f) {
        uint32_t bits;
        std::memcpy(&bits, &row[f], 4);
        h = seed_combine(h, bits);
    }
    return h;
}

}  // namespace

ShowerParams shower_params(const float* row, Detector det, const SynthConfig& cfg) {
    DetectorDims dims = detector_dims(det);
    double E = row[0], vx = row[1], vy = row[2];
    double px = row[4], py = row[5], m = row[7];
    double row_scale = dims.height / 44.0;
    double col_scale = dims.width / 44.0;
    ShowerParams p;
    p.center_row = 0.5 * dims.height +
                   row_scale * (cfg.center_vertex_coeff * vy + cfg.center_angle_coeff * (py / E));
    p.center_col = 0.5 * dims.width +
                   col_scale * (cfg.center_vertex_coeff * vx + cfg.center_angle_coeff * (px / E));
    double sigma_frac = (m > 1e-4) ? cfg.sigma_hadron : cfg.sigma_photon;
    p.sigma_row = std::max(0.5, sigma_frac * dims.height);
    p.sigma_col = std::max(0.5, sigma_frac * dims.height * cfg.sigma_col_ratio);
    p.amplitude = cfg.amp_per_gev * E;
    p.high_diversity = (feature_hash(row) % 1000000ull) < static_cast<uint64_t>(cfg.diversity_mix * 1e6);
    return p;
}

double shower_lambda(const ShowerParams& p, int r, int c) {
    double dr = (r + 0.5 - p.center_row) / p.sigma_row;
    double dc = (c + 0.5 - p.center_col) / p.sigma_col;
    return p.amplitude * std::exp(-0.5 * (dr * dr + dc * dc)) / (2.0 * M_PI * p.sigma_row * p.sigma_col);
}

std::vector<uint16_t> synth_draw_image(const float* row, Detector det, const SynthConfig& cfg, Rng& rng) {
    DetectorDims dims = detector_dims(det);
    ShowerParams base = shower_params(row, det, cfg);
    std::vector<uint16_t> img(static_cast<size_t>(dims.height) * dims.width);
    for (int attempt = 0;; ++attempt) {
        ShowerParams p = base;
        if (p.high_diversity) {
            p.center_row += rng.normal(0.0, cfg.jitter_center_frac * dims.height);
            p.center_col += rng.normal(0.0, cfg.jitter_center_frac * dims.width);
            p.amplitude *= std::exp(rng.normal(0.0, cfg.jitter_amp_sigma));
        }
        int64_t total = 0;
        for (int r = 0; r < dims.height; ++r)
            for (int c = 0; c < dims.width; ++c) {
                int64_t v = rng.poisson(shower_lambda(p, r, c));
                v = std::min<int64_t>(v, 65535);
                img[static_cast<size_t>(r) * dims.width + c] = static_cast<uint16_t>(v);
                total += v;
            }
        if (total >= cfg.min_photons) return img;
        if (attempt > 200)
            throw std::runtime_error("synth: particle cannot reach the minimum photon count");
    }
}

Dataset synth_generate(Detector det, int64_t n, uint64_t seed, const SynthConfig& cfg) {
    if (n < 1) throw std::runtime_error("synth_generate: n must be positive");
    DetectorDims dims = detector_dims(det);
    Dataset ds;
    ds.detector = det;
    ds.height = dims.height;
    ds.width = dims.width;
    ds.features.resize(static_cast<size_t>(n * kNumFeatures));
    ds.images.resize(static_cast<size_t>(n * dims.height * dims.width));

    Rng rng(seed_combine(seed, 0x2dc1ull));
    int64_t pool_size = cfg.repeat_pool_size > 0 ? cfg.repeat_pool_size : std::max<int64_t>(8, n / 256);
    std::vector<float> pool(static_cast<size_t>(pool_size) * kNumFeatures);
    for (int64_t i = 0; i < pool_size; ++i) draw_features(rng, cfg, pool.data() + i * kNumFeatures);

    for (int64_t i = 0; i < n; ++i) {
        float* row = ds.features.data() + i * kNumFeatures;
        if (rng.uniform() < cfg.repeat_fraction) {
            int64_t j = rng.uniform_int(0, pool_size - 1);
            std::copy_n(pool.data() + j * kNumFeatures, kNumFeatures, row);
        } else {
            draw_features(rng, cfg, row);
        }
        std::vector<uint16_t> img = synth_draw_image(row, det, cfg, rng);
        std::copy(img.begin(), img.end(), ds.images.begin() + i * ds.pixels());
    }
    return ds;
}

// ---- statistics ----

DatasetStatsReport dataset_stats(const Dataset& ds, int bins) {
    DatasetStatsReport r;
    r.bins = bins;
    r.total = ds.size();

    std::unordered_set<uint64_t> seen;
    for (int64_t i = 0; i < ds.size(); ++i) seen.insert(feature_hash(ds.feature_row(i)));
    r.unique_features = static_cast<int64_t>(seen.size());

    const auto& table = particle_table();
    std::vector<int64_t> type_counts(table.size() + 1, 0);
    for (int64_t i = 0; i < ds.size(); ++i) {
        const float* row = ds.feature_row(i);
        size_t k = table.size();
        for (size_t t = 0; t < table.size(); ++t)
            if (std::fabs(row[7] - table[t].mass) < 1e-4f && std::fabs(row[8] - table[t].charge) < 1e-4f) {
                k = t;
                break;
            }
        ++type_counts[k];
    }
    for (size_t t = 0; t < table.size(); ++t)
        if (type_counts[t] > 0)
            r.type_proportions.emplace_back(table[t].name,
                                            static_cast<double>(type_counts[t]) / static_cast<double>(r.total));
    if (type_counts.back() > 0)
        r.type_proportions.emplace_back("other",
                                        static_cast<double>(type_counts.back()) / static_cast<double>(r.total));

    for (int f = 0; f < kNumFeatures; ++f) {
        double lo = ds.feature_row(0)[f], hi = lo;
        for (int64_t i = 0; i < ds.size(); ++i) {
            double v = ds.feature_row(i)[f];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) hi = lo + 1.0;
        auto& edges = r.edges[static_cast<size_t>(f)];
        auto& counts = r.counts[static_cast<size_t>(f)];
        edges.resize(static_cast<size_t>(bins) + 1);
        counts.assign(static_cast<size_t>(bins), 0);
        for (int b = 0; b <= bins; ++b) edges[static_cast<size_t>(b)] = lo + (hi - lo) * b / bins;
        for (int64_t i = 0; i < ds.size(); ++i) {
            double v = ds.feature_row(i)[f];
            int b = static_cast<int>((v - lo) / (hi - lo) * bins);
            b = std::clamp(b, 0, bins - 1);
            ++counts[static_cast<size_t>(b)];
        }
    }
    return r;
}

std::string stats_to_json(const DatasetStatsReport& r) {
    json j;
    j["total_examples"] = r.total;
    j["unique_features"] = r.unique_features;
    json props = json::object();
    for (const auto& [name, frac] : r.type_proportions) props[name] = frac;
    j["type_proportions"] = props;
    j["histogram_bins"] = r.bins;
    return j.dump(2);
}

void stats_histograms_csv(const DatasetStatsReport& r, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "feature,bin_lo,bin_hi,count\n";
    for (int feat = 0; feat < kNumFeatures; ++feat) {
        const auto& e = r.edges[static_cast<size_t>(feat)];
        const auto& c = r.counts[static_cast<size_t>(feat)];
        for (size_t b = 0; b < c.size(); ++b)
            f << kFeatureNames[static_cast<size_t>(feat)] << "," << e[b] << "," << e[b + 1] << "," << c[b]
              << "\n";
    }
}

}  // namespace zdcfm
