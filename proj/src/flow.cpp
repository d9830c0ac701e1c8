#include "zdcfm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace zdcfm {

Tensor euler_sample(const VelocityFn& vel, const Tensor& cond, const std::vector<int>& sample_shape,
                    const FMSchedule& sched, uint64_t seed) {
    sched.validate();
    if (cond.ndim() != 2) throw std::runtime_error("euler_sample: cond must be (B, dim)");
    int B = cond.dim(0);
    std::vector<int> shape = sample_shape;
    shape.insert(shape.begin(), B);
    Tensor x(shape);
    int64_t stride = x.numel() / B;
    for (int64_t b = 0; b < B; ++b) {
        Rng rng(seed_combine(seed, static_cast<uint64_t>(b)));
        for (int64_t i = b * stride; i < (b + 1) * stride; ++i) x[i] = static_cast<float>(rng.normal());
    }
    for (int s = 0; s < sched.num_steps; ++s) {
        double t = sched.t_grid[static_cast<size_t>(s)];
        double dt = sched.t_grid[static_cast<size_t>(s) + 1] - t;
        std::vector<double> tb(static_cast<size_t>(B), t);
        Tensor v = vel(x, tb, cond);
        if (!v.same_shape(x)) throw std::runtime_error("euler_sample: velocity shape mismatch");
        bool finite = true;
        for (int64_t i = 0; i < x.numel(); ++i) {
            x[i] += static_cast<float>(dt) * v[i];
            finite = finite && std::isfinite(x[i]);
        }
        if (!finite) throw DivergenceError("euler_sample: non-finite state at t=" + std::to_string(t));
    }
    return x;
}

FMTrainResult train_fm_unet(const UNetConfig& net_cfg, const FMTrainConfig& cfg, const FMTrainInputs& in,
                            const std::string& model_kind, const PreprocStats& preproc,
                            nlohmann::json extra_metadata) {
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::runtime_error("train_fm: bad epoch/batch config");
    int64_t n_train = in.train_x.dim(0);
    if (n_train < 1) throw std::runtime_error("train_fm: empty training set");
    int64_t n_val = in.val_cond.dim(0);
    int64_t val_rows = std::min<int64_t>(n_val, cfg.val_cap);

    UNet<float> net = UNet<float>::build(net_cfg, seed_combine(cfg.seed, 0x1417ull));
    std::vector<Tensor*> pp;
    for (auto& t : net.params.tensors) pp.push_back(&t);
    int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    AdamConfig opt = cfg.opt;
    if (opt.cosine_decay && opt.total_steps == 0) opt.total_steps = steps_per_epoch * cfg.epochs;
    Adam<float> adam(opt, pp);

    Rng rng(seed_combine(cfg.seed, 0x7a17ull));
    uint64_t val_noise_seed = seed_combine(cfg.seed, 0xa11ull);  // fixed across epochs

    int64_t C = in.train_x.dim(1), H = in.train_x.dim(2), W = in.train_x.dim(3);
    int64_t px = C * H * W;
    std::vector<int> order(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);

    FMTrainResult res;
    ParamStore<float> best_params;
    Tape<float> tape;

    FMSchedule val_sched = FMSchedule::uniform(cfg.sample_steps);
    Tensor val_cond_sub({static_cast<int>(val_rows), static_cast<int>(in.val_cond.dim(1))});
    std::copy_n(in.val_cond.data.data(), val_cond_sub.numel(), val_cond_sub.data.data());
    std::vector<ChannelVector> val_true(in.val_channels.begin(), in.val_channels.begin() + val_rows);

    for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
            int64_t bs = std::min<int64_t>(cfg.batch_size, n_train - b0);
            Tensor x1({static_cast<int>(bs), static_cast<int>(C), static_cast<int>(H), static_cast<int>(W)});
            Tensor cond({static_cast<int>(bs), static_cast<int>(in.train_cond.dim(1))});
            for (int64_t i = 0; i < bs; ++i) {
                int src = order[static_cast<size_t>(b0 + i)];
                std::copy_n(in.train_x.data.data() + src * px, px, x1.data.data() + i * px);
                std::copy_n(in.train_cond.data.data() + static_cast<int64_t>(src) * in.train_cond.dim(1),
                            in.train_cond.dim(1), cond.data.data() + i * in.train_cond.dim(1));
            }
            tape.clear();
            auto pvars = net.params.bind(tape, /*requires_grad=*/true);
            VelocityBuilder<float> builder = [&](Tape<float>& t, Tape<float>::Var x_t,
                                                 const std::vector<double>& tv, Tape<float>::Var c) {
                return net.forward(t, pvars, x_t, tv, c);
            };
            auto loss = cfm_loss(tape, builder, x1, cond, rng);
            double lv = static_cast<double>(tape.val(loss)[0]);
            if (!std::isfinite(lv)) {
                res.diverged = true;
                break;
            }
            loss_sum += lv;
            ++batches;
            tape.backward(loss);
            std::vector<const Tensor*> grads;
            grads.reserve(pvars.size());
            for (auto v : pvars) grads.push_back(&tape.grad(v));
            adam.step(grads);
        }
        if (res.diverged) {
            res.trace.push_back({epoch, std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::infinity()});
            break;
        }

        // validation Wasserstein on sampled responses
        double val_w = std::numeric_limits<double>::infinity();
        try {
            VelocityFn vfn = [&](const Tensor& x_t, const std::vector<double>& t, const Tensor& c) {
                tape.clear();
                tape.set_grad_enabled(false);
                auto pv = net.params.bind(tape, false);
                auto out = net.forward(tape, pv, tape.leaf(x_t), t, tape.leaf(c));
                Tensor v = tape.val(out);
                tape.set_grad_enabled(true);
                return v;
            };
            Tensor sampled = euler_sample(vfn, val_cond_sub,
                                          {static_cast<int>(C), static_cast<int>(H), static_cast<int>(W)},
                                          val_sched, val_noise_seed);
            val_w = wasserstein1_channels(val_true, in.to_channels(sampled));
        } catch (const DivergenceError&) {
            // leave as +inf for this epoch
        }
        res.trace.push_back({epoch, loss_sum / std::max<int64_t>(1, batches), val_w});
        if (val_w < res.best_val_wasserstein) {
            res.best_val_wasserstein = val_w;
            res.best_epoch = epoch;
            best_params = net.params;
        }
    }

    if (res.best_epoch < 0) {
        res.diverged = true;
        return res;
    }
    nlohmann::json meta = std::move(extra_metadata);
    meta["epochs"] = cfg.epochs;
    meta["best_epoch"] = res.best_epoch;
    meta["best_val_wasserstein"] = res.best_val_wasserstein;
    meta["sample_steps"] = cfg.sample_steps;
    res.checkpoint = make_checkpoint(model_kind, unet_config_to_json(net_cfg), best_params, preproc,
                                     cfg.seed, std::move(meta));
    return res;
}

void write_trace_csv(const std::vector<EpochTrace>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "epoch,loss,val_wasserstein\n";
    for (const auto& t : trace) f << t.epoch << "," << t.loss << "," << t.val_wasserstein << "\n";
}

std::vector<SweepRow> sweep_steps(
    const std::function<std::vector<ChannelVector>(int steps, uint64_t seed)>& sampler,
    const std::vector<ChannelVector>& test_channels, const std::vector<int>& step_list, uint64_t seed,
    int mae_runs) {
    std::vector<SweepRow> rows;
    for (int steps : step_list) {
        SweepRow r{steps, 0.0, 0.0};
        std::vector<ChannelVector> gen = sampler(steps, seed_combine(seed, 0));
        r.wasserstein = wasserstein1_channels(test_channels, gen);
        double mae = mae_channels_once(test_channels, gen);
        for (int k = 1; k < mae_runs; ++k)
            mae += mae_channels_once(test_channels, sampler(steps, seed_combine(seed, static_cast<uint64_t>(k))));
        r.mae = mae / std::max(1, mae_runs);
        rows.push_back(r);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "steps,wasserstein,mae\n";
    for (const auto& r : rows) f << r.steps << "," << r.wasserstein << "," << r.mae << "\n";
}

}  // namespace zdcfm
