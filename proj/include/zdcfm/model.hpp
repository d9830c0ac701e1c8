#pragma once

// Network definitions: the conditional U-Net velocity model, the small VAE,
// dense nets for the direct channel baselines, and the auxiliary nets used by
// the VAE loss (frozen feature extractor, hinge discriminator).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "zdcfm/autograd.hpp"
#include "zdcfm/rng.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

template <class T>
struct ParamStore {
    std::vector<std::string> names;
    std::vector<TensorT<T>> tensors;

    int add(const std::string& name, TensorT<T> t) {
        names.push_back(name);
        tensors.push_back(std::move(t));
        return static_cast<int>(tensors.size()) - 1;
    }

    int64_t count_params() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.numel();
        return n;
    }

    int find(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<typename Tape<T>::Var> bind(Tape<T>& tape, bool requires_grad) const {
        std::vector<typename Tape<T>::Var> vars;
        vars.reserve(tensors.size());
        for (const auto& t : tensors) vars.push_back(tape.leaf(t, requires_grad));
        return vars;
    }
};

inline int64_t count_params_of(int64_t n) { return n; }  // see ParamStore::count_params

// ---- initializers ----

template <class T>
TensorT<T> init_normal(Rng& rng, std::vector<int> shape, double stddev) {
    TensorT<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

// ---- layer descriptors (indices into the ParamStore) ----

struct ConvL {
    int w = -1, b = -1;
    int stride = 1, pad = 1;
};
struct LinearL {
    int w = -1, b = -1;
};
struct NormL {
    int g = -1, b = -1;
    int groups = 1;
};
struct ResBlockL {
    NormL n1;
    ConvL c1;
    LinearL emb;  // time embedding -> per-channel shift
    NormL n2;
    ConvL c2;
    ConvL skip;
    bool has_skip = false;
};
struct CrossAttnL {
    NormL norm;
    LinearL tokens;  // cond (9) -> n_tokens * C
    LinearL wq, wk, wv, wo;
    int heads = 1;
    int n_tokens = 4;
};

template <class T>
struct NetBuilder {
    ParamStore<T>& ps;
    Rng& rng;
    std::string prefix;

    ConvL conv(const std::string& name, int ci, int co, int k, int stride, int pad, bool zero = false) {
        ConvL l;
        l.stride = stride;
        l.pad = pad;
        double std = zero ? 0.0 : std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
        l.w = ps.add(prefix + name + ".w", init_normal<T>(rng, {co, ci, k, k}, std));
        l.b = ps.add(prefix + name + ".b", TensorT<T>::zeros({co}));
        return l;
    }

    // transposed conv weight layout (ci, co, k, k)
    ConvL conv_t(const std::string& name, int ci, int co, int k, int stride, int pad) {
        ConvL l;
        l.stride = stride;
        l.pad = pad;
        double std = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
        l.w = ps.add(prefix + name + ".w", init_normal<T>(rng, {ci, co, k, k}, std));
        l.b = ps.add(prefix + name + ".b", TensorT<T>::zeros({co}));
        return l;
    }

    LinearL dense(const std::string& name, int in, int out, bool zero = false) {
        LinearL l;
        double std = zero ? 0.0 : std::sqrt(1.0 / static_cast<double>(in));
        l.w = ps.add(prefix + name + ".w", init_normal<T>(rng, {out, in}, std));
        l.b = ps.add(prefix + name + ".b", TensorT<T>::zeros({out}));
        return l;
    }

    NormL norm(const std::string& name, int c, int groups) {
        NormL l;
        l.groups = groups;
        l.g = ps.add(prefix + name + ".g", TensorT<T>::full({c}, T(1)));
        l.b = ps.add(prefix + name + ".b", TensorT<T>::zeros({c}));
        return l;
    }

    ResBlockL res_block(const std::string& name, int ci, int co, int groups, int emb_dim) {
        ResBlockL r;
        r.n1 = norm(name + ".n1", ci, groups);
        r.c1 = conv(name + ".c1", ci, co, 3, 1, 1);
        r.emb = dense(name + ".emb", emb_dim, co);
        r.n2 = norm(name + ".n2", co, groups);
        r.c2 = conv(name + ".c2", co, co, 3, 1, 1);
        if (ci != co) {
            r.skip = conv(name + ".skip", ci, co, 1, 1, 0);
            r.has_skip = true;
        }
        return r;
    }

    CrossAttnL cross_attn(const std::string& name, int c, int heads, int n_tokens, int cond_dim, int groups) {
        CrossAttnL a;
        a.heads = heads;
        a.n_tokens = n_tokens;
        a.norm = norm(name + ".norm", c, groups);
        a.tokens = dense(name + ".tokens", cond_dim, n_tokens * c);
        a.wq = dense(name + ".wq", c, c);
        a.wk = dense(name + ".wk", c, c);
        a.wv = dense(name + ".wv", c, c);
        a.wo = dense(name + ".wo", c, c);
        return a;
    }
};

// ---- forward helpers ----

constexpr double kNormEps = 1e-5;

template <class T>
using TapeVar = typename Tape<T>::Var;

template <class T>
struct Ctx {  // a bound forward pass: tape + parameter vars
    Tape<T>& tape;
    const std::vector<TapeVar<T>>& p;

    TapeVar<T> conv(const ConvL& l, TapeVar<T> x) {
        auto y = tape.conv2d(x, p[l.w], l.stride, l.pad);
        return tape.bias_channel(y, p[l.b]);
    }
    TapeVar<T> conv_t(const ConvL& l, TapeVar<T> x) {
        auto y = tape.conv_transpose2d(x, p[l.w], l.stride, l.pad);
        return tape.bias_channel(y, p[l.b]);
    }
    TapeVar<T> dense(const LinearL& l, TapeVar<T> x) { return tape.linear(x, p[l.w], p[l.b]); }
    TapeVar<T> norm(const NormL& l, TapeVar<T> x) {
        return tape.group_norm(x, p[l.g], p[l.b], l.groups, static_cast<T>(kNormEps));
    }
    TapeVar<T> res(const ResBlockL& r, TapeVar<T> x, TapeVar<T> emb) {
        auto h = conv(r.c1, tape.silu(norm(r.n1, x)));
        h = tape.add_sample_channel(h, dense(r.emb, emb));
        h = conv(r.c2, tape.silu(norm(r.n2, h)));
        auto s = r.has_skip ? conv(r.skip, x) : x;
        return tape.add(h, s);
    }
    TapeVar<T> attn(const CrossAttnL& a, TapeVar<T> x, TapeVar<T> cond) {
        const auto& xs = tape.val(x);
        int B = xs.dim(0), C = xs.dim(1), H = xs.dim(2), W = xs.dim(3);
        int L = H * W;
        auto xn = norm(a.norm, x);
        auto seq = tape.transpose_12(tape.reshape(xn, {B, C, L}));  // (B, L, C)
        auto q2 = dense(a.wq, tape.reshape(seq, {B * L, C}));
        auto tok = dense(a.tokens, cond);  // (B, n_tokens*C)
        auto tok2 = tape.reshape(tok, {B * a.n_tokens, C});
        auto k2 = dense(a.wk, tok2);
        auto v2 = dense(a.wv, tok2);
        auto ctx = attention(tape, tape.reshape(q2, {B, L, C}), tape.reshape(k2, {B, a.n_tokens, C}),
                             tape.reshape(v2, {B, a.n_tokens, C}), a.heads);
        auto out = dense(a.wo, tape.reshape(ctx, {B * L, C}));
        auto img = tape.reshape(tape.transpose_12(tape.reshape(out, {B, L, C})), {B, C, H, W});
        return tape.add(x, img);
    }
};

// sinusoidal features of t in [0,1]; half sines, half cosines, log-spaced periods
template <class T>
TensorT<T> time_features(const std::vector<double>& t, int dim) {
    int half = dim / 2;
    TensorT<T> out({static_cast<int>(t.size()), dim});
    for (size_t b = 0; b < t.size(); ++b) {
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(std::log(1000.0) * static_cast<double>(i) / std::max(1, half - 1));
            out[static_cast<int64_t>(b) * dim + i] = static_cast<T>(std::sin(t[b] * freq));
            out[static_cast<int64_t>(b) * dim + half + i] = static_cast<T>(std::cos(t[b] * freq));
        }
        if (dim % 2) out[static_cast<int64_t>(b) * dim + dim - 1] = static_cast<T>(t[b]);
    }
    return out;
}

inline int pad_to_multiple(int x, int m) { return (x % m == 0) ? 0 : m - (x % m); }

// ---- U-Net ----

struct UNetConfig {
    int image_height = 44;
    int image_width = 44;
    int in_channels = 1;
    int base_channels = 20;
    std::vector<int> channel_multipliers = {1, 2, 2};  // one per resolution, length num_down_levels+1
    int num_down_levels = 2;
    int cond_dim = 9;
    int time_embed_dim = 32;
    std::vector<int> attention_levels = {1, 2};
    int attn_heads = 2;
    int cond_tokens = 4;
    int norm_groups = 4;
    int64_t param_budget = 77000;

    bool has_attn(int level) const {
        for (int l : attention_levels)
            if (l == level) return true;
        return false;
    }
};

template <class T>
struct UNet {
    UNetConfig cfg;
    ParamStore<T> params;

    ConvL stem;
    LinearL t1, t2;
    std::vector<ResBlockL> down_res;
    std::vector<CrossAttnL> down_attn;  // parallel to down_res; heads==0 marks absent
    std::vector<ConvL> down;
    ResBlockL mid1, mid2;
    CrossAttnL mid_attn;
    bool has_mid_attn = false;
    std::vector<ConvL> up;
    std::vector<ConvL> fuse;
    std::vector<ResBlockL> up_res;
    ConvL out_norm_conv;
    NormL out_norm;

    static UNet build(const UNetConfig& cfg, uint64_t seed) {
        if (static_cast<int>(cfg.channel_multipliers.size()) != cfg.num_down_levels + 1)
            throw std::runtime_error("unet: channel_multipliers must have num_down_levels+1 entries");
        int div = 1 << cfg.num_down_levels;
        if (cfg.image_height < div || cfg.image_width < div)
            throw std::runtime_error("unet: spatial dims too small for the down levels");
        UNet net;
        net.cfg = cfg;
        Rng rng(seed);
        NetBuilder<T> b{net.params, rng, ""};

        std::vector<int> ch(cfg.channel_multipliers.size());
        for (size_t i = 0; i < ch.size(); ++i) ch[i] = cfg.base_channels * cfg.channel_multipliers[i];

        net.stem = b.conv("stem", cfg.in_channels, ch[0], 3, 1, 1);
        net.t1 = b.dense("time.l1", cfg.time_embed_dim, cfg.time_embed_dim);
        net.t2 = b.dense("time.l2", cfg.time_embed_dim, cfg.time_embed_dim);

        for (int l = 0; l < cfg.num_down_levels; ++l) {
            std::string nm = "down" + std::to_string(l);
            net.down_res.push_back(b.res_block(nm + ".res", ch[l], ch[l], cfg.norm_groups, cfg.time_embed_dim));
            if (cfg.has_attn(l))
                net.down_attn.push_back(
                    b.cross_attn(nm + ".attn", ch[l], cfg.attn_heads, cfg.cond_tokens, cfg.cond_dim, cfg.norm_groups));
            else
                net.down_attn.push_back(CrossAttnL{.heads = 0});
            net.down.push_back(b.conv(nm + ".down", ch[l], ch[l + 1], 3, 2, 1));
        }
        int cm = ch.back();
        net.mid1 = b.res_block("mid.res1", cm, cm, cfg.norm_groups, cfg.time_embed_dim);
        net.has_mid_attn = cfg.has_attn(cfg.num_down_levels);
        if (net.has_mid_attn)
            net.mid_attn = b.cross_attn("mid.attn", cm, cfg.attn_heads, cfg.cond_tokens, cfg.cond_dim, cfg.norm_groups);
        net.mid2 = b.res_block("mid.res2", cm, cm, cfg.norm_groups, cfg.time_embed_dim);

        for (int l = cfg.num_down_levels - 1; l >= 0; --l) {
            std::string nm = "up" + std::to_string(l);
            net.up.push_back(b.conv_t(nm + ".up", ch[l + 1], ch[l], 4, 2, 1));
            net.fuse.push_back(b.conv(nm + ".fuse", 2 * ch[l], ch[l], 3, 1, 1));
            net.up_res.push_back(b.res_block(nm + ".res", ch[l], ch[l], cfg.norm_groups, cfg.time_embed_dim));
        }
        net.out_norm = b.norm("out.norm", ch[0], cfg.norm_groups);
        net.out_norm_conv = b.conv("out.conv", ch[0], cfg.in_channels, 3, 1, 1, /*zero=*/true);

        int64_t n = net.params.count_params();
        if (cfg.param_budget > 0 &&
            (n < static_cast<int64_t>(0.65 * static_cast<double>(cfg.param_budget)) ||
             n > static_cast<int64_t>(1.3 * static_cast<double>(cfg.param_budget))))
            throw std::runtime_error("unet: parameter count " + std::to_string(n) +
                                     " outside budget band of " + std::to_string(cfg.param_budget));
        return net;
    }

    // x (B, in_channels, H, W), t per-sample in [0,1], cond (B, cond_dim) -> velocity, same shape as x
    TapeVar<T> forward(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars, TapeVar<T> x,
                       const std::vector<double>& t, TapeVar<T> cond) const {
        const auto& xs = tape.val(x);
        if (xs.ndim() != 4 || xs.dim(1) != cfg.in_channels || xs.dim(2) != cfg.image_height ||
            xs.dim(3) != cfg.image_width)
            throw std::runtime_error("unet: input shape mismatch " + xs.shape_str());
        if (static_cast<size_t>(xs.dim(0)) != t.size()) throw std::runtime_error("unet: t batch mismatch");
        Ctx<T> c{tape, pvars};
        int div = 1 << cfg.num_down_levels;
        auto h = tape.pad2d(x, pad_to_multiple(cfg.image_height, div), pad_to_multiple(cfg.image_width, div));

        auto tf = tape.leaf(time_features<T>(t, cfg.time_embed_dim));
        auto emb = tape.silu(c.dense(t2, tape.silu(c.dense(t1, tf))));

        h = c.conv(stem, h);
        std::vector<TapeVar<T>> skips;
        for (int l = 0; l < cfg.num_down_levels; ++l) {
            h = c.res(down_res[static_cast<size_t>(l)], h, emb);
            if (down_attn[static_cast<size_t>(l)].heads > 0)
                h = c.attn(down_attn[static_cast<size_t>(l)], h, cond);
            skips.push_back(h);
            h = c.conv(down[static_cast<size_t>(l)], h);
        }
        h = c.res(mid1, h, emb);
        if (has_mid_attn) h = c.attn(mid_attn, h, cond);
        h = c.res(mid2, h, emb);
        for (size_t i = 0; i < up.size(); ++i) {
            h = c.conv_t(up[i], h);
            h = c.conv(fuse[i], tape.concat_channels(h, skips[skips.size() - 1 - i]));
            h = c.res(up_res[i], h, emb);
        }
        h = c.conv(out_norm_conv, tape.silu(c.norm(out_norm, h)));
        return tape.crop2d(h, cfg.image_height, cfg.image_width);
    }
};

// ---- VAE ----

struct VAEConfig {
    int image_height = 44;
    int image_width = 44;
    int downsize_factor = 4;  // two stride-2 stages
    int latent_channels = 4;
    int base_channels = 14;
    int norm_groups = 2;
    int time_embed_dim = 8;  // res blocks share the U-Net building block; a constant embedding feeds it
    int64_t param_budget = 60000;

    int latent_height() const { return (image_height + downsize_factor - 1) / downsize_factor; }
    int latent_width() const { return (image_width + downsize_factor - 1) / downsize_factor; }
};

template <class T>
struct VAE {
    VAEConfig cfg;
    ParamStore<T> params;

    ConvL e_stem;
    ResBlockL e_res1;
    ConvL e_down1;
    ResBlockL e_res2;
    ConvL e_down2;
    NormL e_norm;
    ConvL e_out;  // -> 2 * latent_channels

    ConvL d_stem;
    ResBlockL d_res1;
    ConvL d_up1;
    ResBlockL d_res2;
    ConvL d_up2;
    NormL d_norm;
    ConvL d_out;

    static VAE build(const VAEConfig& cfg, uint64_t seed) {
        if (cfg.downsize_factor != 4) throw std::runtime_error("vae: downsize factor must be 4");
        VAE net;
        net.cfg = cfg;
        Rng rng(seed);
        NetBuilder<T> b{net.params, rng, ""};
        int c1 = cfg.base_channels, c2 = 2 * cfg.base_channels, zc = cfg.latent_channels;

        net.e_stem = b.conv("enc.stem", 1, c1, 3, 1, 1);
        net.e_res1 = b.res_block("enc.res1", c1, c1, cfg.norm_groups, cfg.time_embed_dim);
        net.e_down1 = b.conv("enc.down1", c1, c2, 3, 2, 1);
        net.e_res2 = b.res_block("enc.res2", c2, c2, cfg.norm_groups, cfg.time_embed_dim);
        net.e_down2 = b.conv("enc.down2", c2, c2, 3, 2, 1);
        net.e_norm = b.norm("enc.norm", c2, cfg.norm_groups);
        net.e_out = b.conv("enc.out", c2, 2 * zc, 3, 1, 1);

        net.d_stem = b.conv("dec.stem", zc, c2, 3, 1, 1);
        net.d_res1 = b.res_block("dec.res1", c2, c2, cfg.norm_groups, cfg.time_embed_dim);
        net.d_up1 = b.conv_t("dec.up1", c2, c1, 4, 2, 1);
        net.d_res2 = b.res_block("dec.res2", c1, c1, cfg.norm_groups, cfg.time_embed_dim);
        net.d_up2 = b.conv_t("dec.up2", c1, c1, 4, 2, 1);
        net.d_norm = b.norm("dec.norm", c1, cfg.norm_groups);
        net.d_out = b.conv("dec.out", c1, 1, 3, 1, 1);

        int64_t n = net.params.count_params();
        if (cfg.param_budget > 0 &&
            (n < static_cast<int64_t>(0.65 * static_cast<double>(cfg.param_budget)) ||
             n > static_cast<int64_t>(1.3 * static_cast<double>(cfg.param_budget))))
            throw std::runtime_error("vae: parameter count " + std::to_string(n) +
                                     " outside budget band of " + std::to_string(cfg.param_budget));
        return net;
    }

    TensorT<T> const_emb(int batch) const {
        return TensorT<T>::full({batch, cfg.time_embed_dim}, T(1));
    }

    // returns (mu, logvar), each (B, latent_channels, ceil(H/4), ceil(W/4))
    std::pair<TapeVar<T>, TapeVar<T>> encode(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars,
                                             TapeVar<T> x) const {
        const auto& xs = tape.val(x);
        if (xs.ndim() != 4 || xs.dim(1) != 1 || xs.dim(2) != cfg.image_height || xs.dim(3) != cfg.image_width)
            throw std::runtime_error("vae: input shape mismatch " + xs.shape_str());
        Ctx<T> c{tape, pvars};
        auto emb = tape.leaf(const_emb(xs.dim(0)));
        auto h = tape.pad2d(x, pad_to_multiple(cfg.image_height, 4), pad_to_multiple(cfg.image_width, 4));
        h = c.conv(e_stem, h);
        h = c.res(e_res1, h, emb);
        h = c.conv(e_down1, h);
        h = c.res(e_res2, h, emb);
        h = c.conv(e_down2, h);
        h = c.conv(e_out, tape.silu(c.norm(e_norm, h)));
        int zc = cfg.latent_channels;
        return {tape.slice_channels(h, 0, zc), tape.slice_channels(h, zc, 2 * zc)};
    }

    TapeVar<T> decode(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars, TapeVar<T> z) const {
        const auto& zs = tape.val(z);
        if (zs.ndim() != 4 || zs.dim(1) != cfg.latent_channels || zs.dim(2) != cfg.latent_height() ||
            zs.dim(3) != cfg.latent_width())
            throw std::runtime_error("vae: latent shape mismatch " + zs.shape_str());
        Ctx<T> c{tape, pvars};
        auto emb = tape.leaf(const_emb(zs.dim(0)));
        auto h = c.conv(d_stem, z);
        h = c.res(d_res1, h, emb);
        h = c.conv_t(d_up1, h);
        h = c.res(d_res2, h, emb);
        h = c.conv_t(d_up2, h);
        h = c.conv(d_out, tape.silu(c.norm(d_norm, h)));
        return tape.crop2d(h, cfg.image_height, cfg.image_width);
    }
};

// ---- dense nets ----

struct MlpConfig {
    int in_dim = 9;
    int hidden = 48;
    int depth = 2;  // hidden layers
    int out_dim = 5;
};

template <class T>
struct Mlp {
    MlpConfig cfg;
    ParamStore<T> params;
    std::vector<LinearL> layers;

    static Mlp build(const MlpConfig& cfg, uint64_t seed) {
        Mlp net;
        net.cfg = cfg;
        Rng rng(seed);
        NetBuilder<T> b{net.params, rng, ""};
        int in = cfg.in_dim;
        for (int i = 0; i < cfg.depth; ++i) {
            net.layers.push_back(b.dense("l" + std::to_string(i), in, cfg.hidden));
            in = cfg.hidden;
        }
        net.layers.push_back(b.dense("out", in, cfg.out_dim));
        return net;
    }

    TapeVar<T> forward(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars, TapeVar<T> x) const {
        Ctx<T> c{tape, pvars};
        auto h = x;
        for (size_t i = 0; i + 1 < layers.size(); ++i) h = tape.silu(c.dense(layers[i], h));
        return c.dense(layers.back(), h);
    }
};

// hinge-loss discriminator: three stride-2 convs, spatial mean, dense head -> (B, 1)
template <class T>
struct Discriminator {
    ParamStore<T> params;
    ConvL c1, c2, c3;
    LinearL head;

    static Discriminator build(int base, uint64_t seed) {
        Discriminator d;
        Rng rng(seed);
        NetBuilder<T> b{d.params, rng, ""};
        d.c1 = b.conv("c1", 1, base, 3, 2, 1);
        d.c2 = b.conv("c2", base, 2 * base, 3, 2, 1);
        d.c3 = b.conv("c3", 2 * base, 2 * base, 3, 2, 1);
        d.head = b.dense("head", 2 * base, 1);
        return d;
    }

    TapeVar<T> forward(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars, TapeVar<T> x) const {
        Ctx<T> c{tape, pvars};
        auto h = tape.silu(c.conv(c1, x));
        h = tape.silu(c.conv(c2, h));
        h = tape.silu(c.conv(c3, h));
        return c.dense(head, tape.mean_spatial(h));
    }
};

// frozen random convnet standing in for a perceptual feature extractor
template <class T>
struct FeatureNet {
    ParamStore<T> params;
    ConvL c1, c2;

    static FeatureNet build(int base, uint64_t seed) {
        FeatureNet f;
        Rng rng(seed);
        NetBuilder<T> b{f.params, rng, ""};
        f.c1 = b.conv("c1", 1, base, 3, 2, 1);
        f.c2 = b.conv("c2", base, 2 * base, 3, 2, 1);
        return f;
    }

    TapeVar<T> forward(Tape<T>& tape, const std::vector<TapeVar<T>>& pvars, TapeVar<T> x) const {
        Ctx<T> c{tape, pvars};
        return c.conv(c2, tape.silu(c.conv(c1, x)));
    }
};

}  // namespace zdcfm
