#include "zdcfm/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace zdcfm {

Tensor standardized_conds(const Dataset& ds, const std::vector<int>& rows, const PreprocStats& s) {
    Tensor out({static_cast<int>(rows.size()), kNumFeatures});
    for (size_t i = 0; i < rows.size(); ++i)
        standardize(ds.feature_row(rows[i]), s, out.data.data() + i * kNumFeatures);
    return out;
}

Tensor log_images(const Dataset& ds, const std::vector<int>& rows) {
    int64_t px = ds.pixels();
    Tensor out({static_cast<int>(rows.size()), 1, ds.height, ds.width});
    for (size_t i = 0; i < rows.size(); ++i)
        log_transform(ds.image(rows[i]), out.data.data() + static_cast<int64_t>(i) * px, px);
    return out;
}

std::vector<ChannelVector> channels_from_log_images(const Tensor& log_imgs) {
    int B = log_imgs.dim(0), H = log_imgs.dim(2), W = log_imgs.dim(3);
    int64_t px = static_cast<int64_t>(H) * W;
    std::vector<ChannelVector> out(static_cast<size_t>(B));
    std::vector<uint16_t> buf(static_cast<size_t>(px));
#pragma omp parallel for schedule(static) firstprivate(buf) if (kern::parallel_enabled() && B > 1)
    for (int b = 0; b < B; ++b) {
        inverse_transform(log_imgs.data.data() + b * px, buf.data(), px);
        out[static_cast<size_t>(b)] = extract_channels(buf.data(), H, W);
    }
    return out;
}

std::vector<ChannelVector> channels_for_rows(const Dataset& ds, const std::vector<int>& rows) {
    std::vector<ChannelVector> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) out[i] = extract_channels(ds, rows[i]);
    return out;
}

// ---- pixel FM ----

PixelFM load_pixel_fm(const ModelCheckpoint& ckpt, bool f16) {
    if (ckpt.model_kind != "unet_pixel")
        throw std::runtime_error("expected a unet_pixel checkpoint, found " + ckpt.model_kind);
    PixelFM m;
    m.cfg = unet_config_from_json(ckpt.config);
    m.net = UNet<float>::build(m.cfg, 0);
    load_params_into(ckpt, m.net.params);
    m.preproc = ckpt.preproc;
    m.detector = detector_from_name(ckpt.metadata.at("detector").get<std::string>());
    if (ckpt.metadata.contains("sample_steps")) m.default_steps = ckpt.metadata.at("sample_steps").get<int>();
    m.f16 = f16;
    if (f16)
        for (auto& t : m.net.params.tensors) t = cast_precision(t, DType::f16);
    return m;
}

namespace {

// velocity over plain tensors from a bound U-Net; fresh tape per call
VelocityFn make_velocity(const UNet<float>& net, bool f16) {
    auto tape = std::make_shared<Tape<float>>();
    return [&net, tape, f16](const Tensor& x_t, const std::vector<double>& t, const Tensor& cond) {
        tape->clear();
        tape->set_grad_enabled(false);
        tape->set_f16_activations(f16);
        auto pv = net.params.bind(*tape, false);
        auto out = net.forward(*tape, pv, tape->leaf(x_t), t, tape->leaf(cond));
        return tape->val(out);
    };
}

}  // namespace

Tensor pixel_fm_sample(const PixelFM& m, const Tensor& std_cond, const FMSchedule& sched, uint64_t seed) {
    VelocityFn vel = make_velocity(m.net, m.f16);
    return euler_sample(vel, std_cond, {1, m.cfg.image_height, m.cfg.image_width}, sched, seed);
}

std::vector<ChannelVector> generate_channels_pixel(const PixelFM& m, const Dataset& ds,
                                                   const std::vector<int>& rows, int steps, uint64_t seed,
                                                   int batch_size) {
    FMSchedule sched = FMSchedule::uniform(steps > 0 ? steps : m.default_steps);
    std::vector<ChannelVector> out;
    out.reserve(rows.size());
    for (size_t b0 = 0; b0 < rows.size(); b0 += static_cast<size_t>(batch_size)) {
        size_t b1 = std::min(rows.size(), b0 + static_cast<size_t>(batch_size));
        std::vector<int> chunk(rows.begin() + static_cast<int64_t>(b0), rows.begin() + static_cast<int64_t>(b1));
        Tensor cond = standardized_conds(ds, chunk, m.preproc);
        Tensor sampled = pixel_fm_sample(m, cond, sched, seed_combine(seed, b0));
        for (auto& ch : channels_from_log_images(sampled)) out.push_back(ch);
    }
    return out;
}

// ---- latent FM ----

VAE<float> vae_from_checkpoint(const ModelCheckpoint& ckpt) {
    if (ckpt.model_kind != "vae") throw std::runtime_error("expected a vae checkpoint, found " + ckpt.model_kind);
    VAEConfig cfg = vae_config_from_json(ckpt.config);
    VAE<float> vae = VAE<float>::build(cfg, 0);
    load_params_into(ckpt, vae.params);
    return vae;
}

LatentFM load_latent_fm(const ModelCheckpoint& fm_ckpt, const ModelCheckpoint& vae_ckpt, bool f16) {
    if (fm_ckpt.model_kind != "unet_latent")
        throw std::runtime_error("expected a unet_latent checkpoint, found " + fm_ckpt.model_kind);
    LatentFM m;
    m.fm_cfg = unet_config_from_json(fm_ckpt.config);
    m.net = UNet<float>::build(m.fm_cfg, 0);
    load_params_into(fm_ckpt, m.net.params);
    m.vae = vae_from_checkpoint(vae_ckpt);
    m.vae_cfg = m.vae.cfg;
    m.preproc = fm_ckpt.preproc;
    m.detector = detector_from_name(fm_ckpt.metadata.at("detector").get<std::string>());
    std::string vae_det = vae_ckpt.metadata.at("detector").get<std::string>();
    if (vae_det != detector_name(m.detector))
        throw std::runtime_error("latent FM / VAE detector mismatch: " + vae_det);
    if (m.fm_cfg.image_height != m.vae_cfg.latent_height() || m.fm_cfg.image_width != m.vae_cfg.latent_width() ||
        m.fm_cfg.in_channels != m.vae_cfg.latent_channels)
        throw std::runtime_error("latent FM / VAE latent dimension mismatch");
    m.latent_mean = fm_ckpt.metadata.at("latent_mean").get<std::vector<double>>();
    m.latent_std = fm_ckpt.metadata.at("latent_std").get<std::vector<double>>();
    if (fm_ckpt.metadata.contains("sample_steps"))
        m.default_steps = fm_ckpt.metadata.at("sample_steps").get<int>();
    m.f16 = f16;
    if (f16) {
        for (auto& t : m.net.params.tensors) t = cast_precision(t, DType::f16);
        for (auto& t : m.vae.params.tensors) t = cast_precision(t, DType::f16);
    }
    return m;
}

Tensor latent_fm_sample(const LatentFM& m, const Tensor& std_cond, const FMSchedule& sched, uint64_t seed) {
    VelocityFn vel = make_velocity(m.net, m.f16);
    Tensor lat = euler_sample(vel, std_cond, {m.fm_cfg.in_channels, m.fm_cfg.image_height, m.fm_cfg.image_width},
                              sched, seed);
    // undo the per-channel latent standardization, then decode
    int B = lat.dim(0), C = lat.dim(1);
    int64_t spx = static_cast<int64_t>(lat.dim(2)) * lat.dim(3);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            float* p = lat.data.data() + (static_cast<int64_t>(b) * C + c) * spx;
            double mu = m.latent_mean[static_cast<size_t>(c)], sd = m.latent_std[static_cast<size_t>(c)];
            for (int64_t i = 0; i < spx; ++i)
                p[i] = static_cast<float>(static_cast<double>(p[i]) * sd + mu);
        }
    return vae_decode_batch(m.vae, lat);
}

std::vector<ChannelVector> generate_channels_latent(const LatentFM& m, const Dataset& ds,
                                                    const std::vector<int>& rows, int steps, uint64_t seed,
                                                    int batch_size) {
    FMSchedule sched = FMSchedule::uniform(steps > 0 ? steps : m.default_steps);
    std::vector<ChannelVector> out;
    out.reserve(rows.size());
    for (size_t b0 = 0; b0 < rows.size(); b0 += static_cast<size_t>(batch_size)) {
        size_t b1 = std::min(rows.size(), b0 + static_cast<size_t>(batch_size));
        std::vector<int> chunk(rows.begin() + static_cast<int64_t>(b0), rows.begin() + static_cast<int64_t>(b1));
        Tensor cond = standardized_conds(ds, chunk, m.preproc);
        Tensor imgs = latent_fm_sample(m, cond, sched, seed_combine(seed, b0));
        for (auto& ch : channels_from_log_images(imgs)) out.push_back(ch);
    }
    return out;
}

Tensor vae_encode_mu(const VAE<float>& vae, const Tensor& log_imgs, int batch_size) {
    int N = log_imgs.dim(0);
    int64_t px = log_imgs.numel() / N;
    Tensor out({N, vae.cfg.latent_channels, vae.cfg.latent_height(), vae.cfg.latent_width()});
    int64_t lpx = out.numel() / N;
    Tape<float> tape;
    for (int b0 = 0; b0 < N; b0 += batch_size) {
        int bs = std::min(batch_size, N - b0);
        Tensor x({bs, 1, log_imgs.dim(2), log_imgs.dim(3)});
        std::copy_n(log_imgs.data.data() + static_cast<int64_t>(b0) * px, static_cast<int64_t>(bs) * px,
                    x.data.data());
        tape.clear();
        tape.set_grad_enabled(false);
        auto pv = vae.params.bind(tape, false);
        auto [mu, logvar] = vae.encode(tape, pv, tape.leaf(x));
        std::copy_n(tape.val(mu).data.data(), static_cast<int64_t>(bs) * lpx,
                    out.data.data() + static_cast<int64_t>(b0) * lpx);
        tape.set_grad_enabled(true);
    }
    return out;
}

Tensor vae_decode_batch(const VAE<float>& vae, const Tensor& latents, int batch_size) {
    int N = latents.dim(0);
    int64_t lpx = latents.numel() / N;
    Tensor out({N, 1, vae.cfg.image_height, vae.cfg.image_width});
    int64_t px = out.numel() / N;
    Tape<float> tape;
    for (int b0 = 0; b0 < N; b0 += batch_size) {
        int bs = std::min(batch_size, N - b0);
        Tensor z({bs, latents.dim(1), latents.dim(2), latents.dim(3)});
        std::copy_n(latents.data.data() + static_cast<int64_t>(b0) * lpx, static_cast<int64_t>(bs) * lpx,
                    z.data.data());
        tape.clear();
        tape.set_grad_enabled(false);
        auto pv = vae.params.bind(tape, false);
        auto img = vae.decode(tape, pv, tape.leaf(z));
        std::copy_n(tape.val(img).data.data(), static_cast<int64_t>(bs) * px,
                    out.data.data() + static_cast<int64_t>(b0) * px);
        tape.set_grad_enabled(true);
    }
    return out;
}

}  // namespace zdcfm
