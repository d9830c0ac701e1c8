#pragma once

// Loads checkpoints into runnable samplers and provides the shared
// data-preparation helpers (standardized conditions, log-space images,
// channel extraction of sampled batches).

#include <string>
#include <vector>

#include "zdcfm/checkpoint.hpp"
#include "zdcfm/data.hpp"
#include "zdcfm/flow.hpp"
#include "zdcfm/metrics.hpp"
#include "zdcfm/model.hpp"

namespace zdcfm {

Tensor standardized_conds(const Dataset& ds, const std::vector<int>& rows, const PreprocStats& s);
Tensor log_images(const Dataset& ds, const std::vector<int>& rows);
std::vector<ChannelVector> channels_from_log_images(const Tensor& log_imgs);
std::vector<ChannelVector> channels_for_rows(const Dataset& ds, const std::vector<int>& rows);

struct PixelFM {
    UNetConfig cfg;
    UNet<float> net;
    PreprocStats preproc;
    Detector detector = Detector::ZN;
    int default_steps = 11;
    bool f16 = false;  // reduced-precision execution (weights and activations rounded)
};

PixelFM load_pixel_fm(const ModelCheckpoint& ckpt, bool f16 = false);

// sampled log-space images (B, 1, H, W) for standardized conditions
Tensor pixel_fm_sample(const PixelFM& m, const Tensor& std_cond, const FMSchedule& sched, uint64_t seed);

std::vector<ChannelVector> generate_channels_pixel(const PixelFM& m, const Dataset& ds,
                                                   const std::vector<int>& rows, int steps, uint64_t seed,
                                                   int batch_size = 256);

struct LatentFM {
    UNetConfig fm_cfg;
    UNet<float> net;
    VAEConfig vae_cfg;
    VAE<float> vae;
    PreprocStats preproc;
    std::vector<double> latent_mean, latent_std;  // per latent channel
    Detector detector = Detector::ZN;
    int default_steps = 7;
    bool f16 = false;
};

LatentFM load_latent_fm(const ModelCheckpoint& fm_ckpt, const ModelCheckpoint& vae_ckpt, bool f16 = false);

// euler in latent space, then decode; returns log-space images
Tensor latent_fm_sample(const LatentFM& m, const Tensor& std_cond, const FMSchedule& sched, uint64_t seed);

std::vector<ChannelVector> generate_channels_latent(const LatentFM& m, const Dataset& ds,
                                                    const std::vector<int>& rows, int steps, uint64_t seed,
                                                    int batch_size = 256);

// VAE helpers
VAE<float> vae_from_checkpoint(const ModelCheckpoint& ckpt);
// encoder means for the given rows, (N, zc, lh, lw)
Tensor vae_encode_mu(const VAE<float>& vae, const Tensor& log_imgs, int batch_size = 256);
Tensor vae_decode_batch(const VAE<float>& vae, const Tensor& latents, int batch_size = 256);

}  // namespace zdcfm
