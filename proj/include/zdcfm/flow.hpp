#pragma once

// Conditional flow matching: linear interpolation path, constant target
// velocity, the tractable CFM regression loss, and the Euler sampler.
// The trainer (src/flow.cpp) is shared by the pixel-space and latent-space
// stages; only the decode-to-channels hook differs.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "zdcfm/autograd.hpp"
#include "zdcfm/checkpoint.hpp"
#include "zdcfm/metrics.hpp"
#include "zdcfm/model.hpp"
#include "zdcfm/optim.hpp"
#include "zdcfm/rng.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

struct FMSchedule {
    int num_steps = 11;
    std::vector<double> t_grid;  // 0 = t_0 < ... < t_N = 1

    static FMSchedule uniform(int n) {
        if (n < 1) throw std::runtime_error("schedule: need at least one step");
        FMSchedule s;
        s.num_steps = n;
        s.t_grid.resize(static_cast<size_t>(n) + 1);
        for (int i = 0; i <= n; ++i) s.t_grid[static_cast<size_t>(i)] = static_cast<double>(i) / n;
        s.t_grid.back() = 1.0;
        return s;
    }

    void validate() const {
        if (t_grid.size() != static_cast<size_t>(num_steps) + 1 || t_grid.front() != 0.0 ||
            t_grid.back() != 1.0)
            throw std::runtime_error("schedule: grid must run from 0 to 1");
        for (size_t i = 1; i < t_grid.size(); ++i)
            if (t_grid[i] <= t_grid[i - 1]) throw std::runtime_error("schedule: grid must increase");
    }
};

// x_t = (1 - t) x0 + t x1
template <class T>
TensorT<T> interpolate(const TensorT<T>& x0, const TensorT<T>& x1, double t) {
    if (!x0.same_shape(x1)) throw std::runtime_error("interpolate: shape mismatch");
    if (t < 0.0 || t > 1.0) throw std::runtime_error("interpolate: t outside [0,1]");
    TensorT<T> out(x0.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>((1.0 - t) * static_cast<double>(x0[i]) + t * static_cast<double>(x1[i]));
    return out;
}

// per-sample t over the leading (batch) dim
template <class T>
TensorT<T> interpolate_per_sample(const TensorT<T>& x0, const TensorT<T>& x1, const std::vector<double>& t) {
    if (!x0.same_shape(x1)) throw std::runtime_error("interpolate: shape mismatch");
    int64_t B = x0.dim(0);
    if (static_cast<int64_t>(t.size()) != B) throw std::runtime_error("interpolate: t batch mismatch");
    int64_t stride = x0.numel() / B;
    TensorT<T> out(x0.shape);
    for (int64_t b = 0; b < B; ++b) {
        double tb = t[static_cast<size_t>(b)];
        if (tb < 0.0 || tb > 1.0) throw std::runtime_error("interpolate: t outside [0,1]");
        for (int64_t i = b * stride; i < (b + 1) * stride; ++i)
            out[i] = static_cast<T>((1.0 - tb) * static_cast<double>(x0[i]) + tb * static_cast<double>(x1[i]));
    }
    return out;
}

// v = x1 - x0 (independent of t)
template <class T>
TensorT<T> target_velocity(const TensorT<T>& x0, const TensorT<T>& x1) {
    if (!x0.same_shape(x1)) throw std::runtime_error("target_velocity: shape mismatch");
    TensorT<T> out(x0.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x1[i] - x0[i];
    return out;
}

// one training batch of the CFM objective: t ~ U[0,1] per sample, x0 ~ N(0,1)
template <class T>
struct CfmBatch {
    TensorT<T> x_t;
    std::vector<double> t;
    TensorT<T> v_target;
};

template <class T>
CfmBatch<T> make_cfm_batch(const TensorT<T>& x1, Rng& rng) {
    if (x1.numel() == 0 || x1.dim(0) == 0) throw std::runtime_error("cfm: empty batch");
    CfmBatch<T> b;
    b.t.resize(static_cast<size_t>(x1.dim(0)));
    for (auto& t : b.t) t = rng.uniform();
    TensorT<T> x0(x1.shape);
    for (auto& v : x0.data) v = static_cast<T>(rng.normal());
    b.v_target = target_velocity(x0, x1);
    b.x_t = interpolate_per_sample(x0, x1, b.t);
    return b;
}

// builds the network output for (x_t, t, cond) on the given tape
template <class T>
using VelocityBuilder =
    std::function<typename Tape<T>::Var(Tape<T>&, typename Tape<T>::Var x_t, const std::vector<double>& t,
                                        typename Tape<T>::Var cond)>;

// mean over batch elements and pixels of |pred - (x1 - x0)|^2
template <class T>
typename Tape<T>::Var cfm_loss(Tape<T>& tape, const VelocityBuilder<T>& net, const TensorT<T>& x1,
                               const TensorT<T>& cond, Rng& rng) {
    CfmBatch<T> batch = make_cfm_batch(x1, rng);
    auto x_t = tape.leaf(batch.x_t);
    auto cond_leaf = tape.leaf(cond);
    auto pred = net(tape, x_t, batch.t, cond_leaf);
    auto target = tape.leaf(batch.v_target);
    return tape.mse(pred, target);
}

// velocity over plain tensors, for sampling
using VelocityFn = std::function<Tensor(const Tensor& x_t, const std::vector<double>& t, const Tensor& cond)>;

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Euler integration of the learned ODE from Gaussian noise. Noise is drawn
// per sample index from seed_combine(seed, index), so results do not depend
// on batch slicing or warm-up repetition.
Tensor euler_sample(const VelocityFn& vel, const Tensor& cond, const std::vector<int>& sample_shape,
                    const FMSchedule& sched, uint64_t seed);

// ---- training ----

struct FMTrainConfig {
    int epochs = 50;
    int batch_size = 256;
    AdamConfig opt;
    uint64_t seed = 0;
    int val_cap = 512;      // validation rows sampled for the per-epoch Wasserstein
    int sample_steps = 11;  // Euler steps for validation sampling
};

struct EpochTrace {
    int epoch;
    double loss;
    double val_wasserstein;
};

struct FMTrainResult {
    bool diverged = false;
    int best_epoch = -1;
    double best_val_wasserstein = std::numeric_limits<double>::infinity();
    std::vector<EpochTrace> trace;
    ModelCheckpoint checkpoint;
};

// model-space training inputs; decode hook maps sampled model-space tensors
// back to readout channels for the validation metric
struct FMTrainInputs {
    Tensor train_x;     // (Nt, C, H, W)
    Tensor train_cond;  // (Nt, cond_dim), standardized
    Tensor val_cond;    // (Nv, cond_dim)
    std::vector<ChannelVector> val_channels;
    std::function<std::vector<ChannelVector>(const Tensor&)> to_channels;
};

FMTrainResult train_fm_unet(const UNetConfig& net_cfg, const FMTrainConfig& cfg, const FMTrainInputs& in,
                            const std::string& model_kind, const PreprocStats& preproc,
                            nlohmann::json extra_metadata);

void write_trace_csv(const std::vector<EpochTrace>& trace, const std::string& path);

// ---- step sweep ----

struct SweepRow {
    int steps;
    double wasserstein;
    double mae;
};

// generic sweep over a sampler(rows, steps, seed) -> channels hook
std::vector<SweepRow> sweep_steps(
    const std::function<std::vector<ChannelVector>(int steps, uint64_t seed)>& sampler,
    const std::vector<ChannelVector>& test_channels, const std::vector<int>& step_list, uint64_t seed,
    int mae_runs = 1);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace zdcfm
