#include "zdcfm/checkpoint.hpp"

#include "zdcfm/binio.hpp"

using json = nlohmann::json;

namespace zdcfm {

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.params) {
        dir.push_back({{"name", name},
                       {"shape", t.shape},
                       {"dtype", dtype_name(t.dtype)},
                       {"offset", offset}});
        offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
    }
    json header = {
        {"model_kind", ckpt.model_kind}, {"config", ckpt.config},     {"preproc", preproc_to_json(ckpt.preproc)},
        {"seed", ckpt.seed},             {"metadata", ckpt.metadata}, {"tensors", dir},
    };
    std::string hs = header.dump();

    ByteWriter w;
    w.str("ZFM1");
    w.u32(ckpt.format_version);
    w.u64(hs.size());
    w.str(hs);
    for (const auto& [name, t] : ckpt.params) w.bytes(t.data.data(), t.data.size() * sizeof(float));
    w.write_file_with_checksum(path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file_checked(path);
    if (r.str(4) != "ZFM1") throw std::runtime_error("not a checkpoint file: " + path);
    ModelCheckpoint ckpt;
    ckpt.format_version = r.u32();
    if (ckpt.format_version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint format_version " +
                                 std::to_string(ckpt.format_version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    uint64_t hlen = r.u64();
    json header = json::parse(r.str(hlen));
    ckpt.model_kind = header.at("model_kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.preproc = preproc_from_json(header.at("preproc"));
    ckpt.seed = header.at("seed").get<uint64_t>();
    ckpt.metadata = header.at("metadata");

    size_t payload_start = r.pos;
    for (const auto& e : header.at("tensors")) {
        std::string name = e.at("name").get<std::string>();
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        t.dtype = dtype_from_name(e.at("dtype").get<std::string>());
        r.pos = payload_start + e.at("offset").get<uint64_t>();
        r.bytes(t.data.data(), t.data.size() * sizeof(float));
        ckpt.params.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

json unet_config_to_json(const UNetConfig& c) {
    return {{"image_height", c.image_height},
            {"image_width", c.image_width},
            {"in_channels", c.in_channels},
            {"base_channels", c.base_channels},
            {"channel_multipliers", c.channel_multipliers},
            {"num_down_levels", c.num_down_levels},
            {"cond_dim", c.cond_dim},
            {"time_embed_dim", c.time_embed_dim},
            {"attention_levels", c.attention_levels},
            {"attn_heads", c.attn_heads},
            {"cond_tokens", c.cond_tokens},
            {"norm_groups", c.norm_groups},
            {"param_budget", c.param_budget}};
}

UNetConfig unet_config_from_json(const json& j) {
    UNetConfig c;
    c.image_height = j.at("image_height").get<int>();
    c.image_width = j.at("image_width").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
    c.num_down_levels = j.at("num_down_levels").get<int>();
    c.cond_dim = j.at("cond_dim").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
    c.attn_heads = j.at("attn_heads").get<int>();
    c.cond_tokens = j.at("cond_tokens").get<int>();
    c.norm_groups = j.at("norm_groups").get<int>();
    c.param_budget = j.at("param_budget").get<int64_t>();
    return c;
}

json vae_config_to_json(const VAEConfig& c) {
    return {{"image_height", c.image_height},   {"image_width", c.image_width},
            {"downsize_factor", c.downsize_factor}, {"latent_channels", c.latent_channels},
            {"base_channels", c.base_channels}, {"norm_groups", c.norm_groups},
            {"time_embed_dim", c.time_embed_dim}, {"param_budget", c.param_budget}};
}

VAEConfig vae_config_from_json(const json& j) {
    VAEConfig c;
    c.image_height = j.at("image_height").get<int>();
    c.image_width = j.at("image_width").get<int>();
    c.downsize_factor = j.at("downsize_factor").get<int>();
    c.latent_channels = j.at("latent_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.norm_groups = j.at("norm_groups").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.param_budget = j.at("param_budget").get<int64_t>();
    return c;
}

json preproc_to_json(const PreprocStats& s) {
    return {{"mean", s.mean}, {"stddev", s.stddev}, {"constant", s.constant}, {"log_transform", s.log_transform}};
}

PreprocStats preproc_from_json(const json& j) {
    PreprocStats s;
    auto mean = j.at("mean").get<std::vector<double>>();
    auto stddev = j.at("stddev").get<std::vector<double>>();
    auto constant = j.at("constant").get<std::vector<bool>>();
    if (mean.size() != kNumFeatures || stddev.size() != kNumFeatures || constant.size() != kNumFeatures)
        throw std::runtime_error("preproc stats: wrong feature count");
    std::copy(mean.begin(), mean.end(), s.mean.begin());
    std::copy(stddev.begin(), stddev.end(), s.stddev.begin());
    for (size_t i = 0; i < kNumFeatures; ++i) s.constant[i] = constant[i];
    s.log_transform = j.at("log_transform").get<bool>();
    return s;
}

ModelCheckpoint make_checkpoint(const std::string& kind, const json& config, const ParamStore<float>& params,
                                const PreprocStats& preproc, uint64_t seed, json metadata) {
    ModelCheckpoint ckpt;
    ckpt.model_kind = kind;
    ckpt.config = config;
    ckpt.preproc = preproc;
    ckpt.seed = seed;
    ckpt.metadata = std::move(metadata);
    ckpt.params.reserve(params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i)
        ckpt.params.emplace_back(params.names[i], params.tensors[i]);
    return ckpt;
}

void load_params_into(const ModelCheckpoint& ckpt, ParamStore<float>& params) {
    if (ckpt.params.size() != params.tensors.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        const auto& [name, t] = ckpt.params[i];
        if (name != params.names[i])
            throw std::runtime_error("checkpoint: parameter name mismatch at " + params.names[i]);
        if (t.shape != params.tensors[i].shape)
            throw std::runtime_error("checkpoint: parameter shape mismatch at " + name);
        params.tensors[i] = t;
    }
}

}  // namespace zdcfm
