#pragma once

// Versioned model checkpoints. Binary layout:
//   magic "ZFM1" | u32 format_version | u64 header length | JSON header
//   | raw little-endian tensor payloads | u64 fnv1a checksum
// The header carries the model kind, config blob, preprocessing statistics,
// seed, training metadata, and a tensor directory (name/shape/dtype/offset).
// Round-trips are bit-exact on parameters.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "zdcfm/data.hpp"
#include "zdcfm/model.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

constexpr uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
    uint32_t format_version = kCheckpointVersion;
    std::string model_kind;  // unet_pixel | unet_latent | vae | mlp_channels | fm_channels
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> params;
    PreprocStats preproc;
    uint64_t seed = 0;
    nlohmann::json metadata;

    const Tensor* find_param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return &t;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

// config (de)serialization
nlohmann::json unet_config_to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);
nlohmann::json vae_config_to_json(const VAEConfig& c);
VAEConfig vae_config_from_json(const nlohmann::json& j);
nlohmann::json preproc_to_json(const PreprocStats& s);
PreprocStats preproc_from_json(const nlohmann::json& j);

// copy between a parameter store and the named checkpoint tensors
ModelCheckpoint make_checkpoint(const std::string& kind, const nlohmann::json& config,
                                const ParamStore<float>& params, const PreprocStats& preproc, uint64_t seed,
                                nlohmann::json metadata);
void load_params_into(const ModelCheckpoint& ckpt, ParamStore<float>& params);

}  // namespace zdcfm
