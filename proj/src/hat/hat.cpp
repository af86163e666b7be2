#include "hydra/hat/hat.hpp"

#include <cmath>
#include <stdexcept>

namespace hydra::hat {

using ad::Init;
using ad::ShapeError;

void HatConfig::validate() const {
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
        throw std::invalid_argument("hat: embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                                    std::to_string(num_heads));
    }
    if (height_bins == 0 || depth_bins == 0 || downsample == 0) {
        throw std::invalid_argument("hat: height_bins, depth_bins and downsample must be positive");
    }
}

namespace {

AttentionWeights make_attention(ad::ParamStore& store, const std::string& p, std::size_t c, bool cross) {
    AttentionWeights a;
    a.wq = store.create(p + "wq", {c, c}, Init::uniform, c);
    a.bq = store.create(p + "bq", {c}, Init::zeros);
    a.wk = store.create(p + "wk", {c, c}, Init::uniform, c);
    a.bk = store.create(p + "bk", {c}, Init::zeros);
    a.wv = store.create(p + "wv", {c, c}, Init::uniform, c);
    if (!cross) a.bv = store.create(p + "bv", {c}, Init::zeros);
    a.wo = store.create(p + "wo", {c, c}, Init::zeros);
    if (!cross) a.bo = store.create(p + "bo", {c}, Init::zeros);
    return a;
}

// [S, L, C] -> [S*heads, L, C/heads]
Tensor split_heads(const Tensor& x, std::size_t heads) {
    const auto& s = x.shape();
    auto t = ad::reshape(x, {s[0], s[1], heads, s[2] / heads});
    t = ad::permute(t, {0, 2, 1, 3});
    return ad::reshape(t, {s[0] * heads, s[1], s[2] / heads});
}

// [S*heads, L, dh] -> [S, L, heads*dh]
Tensor merge_heads(const Tensor& x, std::size_t heads) {
    const auto& s = x.shape();
    auto t = ad::reshape(x, {s[0] / heads, heads, s[1], s[2]});
    t = ad::permute(t, {0, 2, 1, 3});
    return ad::reshape(t, {s[0] / heads, s[1], heads * s[2]});
}

struct AttnResult {
    Tensor context;  // merged heads [S, Lq, C]
    Tensor weights;  // [S*heads, Lq, Lk]
};

AttnResult attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
    auto qh = split_heads(q, heads);
    auto kh = split_heads(k, heads);
    auto vh = split_heads(v, heads);
    const double inv = 1.0 / std::sqrt(static_cast<double>(qh.shape()[2]));
    auto scores = ad::scale(ad::matmul(qh, ad::permute(kh, {0, 2, 1})), inv);
    auto p = ad::softmax(scores, 2);
    return {merge_heads(ad::matmul(p, vh), heads), p};
}

// table [L, C] repeated for S sequences -> [S, L, C]
Tensor tile_sequences(const Tensor& table, std::size_t sequences) {
    const auto& s = table.shape();
    auto flat = ad::reshape(table, {1, s[0] * s[1]});
    std::vector<std::int64_t> zeros(sequences, 0);
    return ad::reshape(ad::gather_rows(flat, zeros), {sequences, s[0], s[1]});
}

}  // namespace

HatWeights make_hat_weights(const HatConfig& config, ad::ParamStore& store, const std::string& prefix) {
    config.validate();
    const std::size_t c = config.embed_dim;
    HatWeights w;
    w.pos_height = store.create(prefix + "pos_height", {config.height_bins, c}, Init::uniform, 1, 0.1);
    w.pos_depth = store.create(prefix + "pos_depth", {config.depth_bins, c}, Init::uniform, 1, 0.1);
    w.ln1_gamma = store.create(prefix + "ln1.gamma", {c}, Init::ones);
    w.ln1_beta = store.create(prefix + "ln1.beta", {c}, Init::zeros);
    w.ln2_gamma = store.create(prefix + "ln2.gamma", {c}, Init::ones);
    w.ln2_beta = store.create(prefix + "ln2.beta", {c}, Init::zeros);
    w.self_attn = make_attention(store, prefix + "self.", c, false);
    w.cross_attn = make_attention(store, prefix + "cross.", c, true);
    return w;
}

Tensor column_batch_reshape(const Tensor& f) {
    if (f.rank() != 5) throw ShapeError("column_batch_reshape: expected [B,N,H,W,C], got " + ad::to_string(f.shape()));
    const auto& s = f.shape();
    auto t = ad::permute(f, {0, 1, 3, 2, 4});
    return ad::reshape(t, {s[0] * s[1] * s[3], s[2], s[4]});
}

Tensor column_batch_unreshape(const Tensor& cols, std::size_t batch, std::size_t cameras, std::size_t width) {
    if (cols.rank() != 3 || cols.shape()[0] != batch * cameras * width) {
        throw ShapeError("column_batch_unreshape: " + ad::to_string(cols.shape()) + " does not hold " +
                         std::to_string(batch) + "x" + std::to_string(cameras) + "x" + std::to_string(width) +
                         " columns");
    }
    const auto& s = cols.shape();
    auto t = ad::reshape(cols, {batch, cameras, width, s[1], s[2]});
    return ad::permute(t, {0, 1, 3, 2, 4});
}

Tensor radar_column_reshape(const Tensor& r) {
    if (r.rank() != 5) throw ShapeError("radar_column_reshape: expected [B,N,D,W,C], got " + ad::to_string(r.shape()));
    const auto& s = r.shape();
    auto t = ad::permute(r, {0, 1, 3, 2, 4});
    return ad::reshape(t, {s[0] * s[1] * s[3], s[2], s[4]});
}

HatOutput hat_forward(const Tensor& f_cols, const Tensor& r_cols, const HatWeights& w, const HatConfig& config) {
    config.validate();
    if (f_cols.rank() != 3 || r_cols.rank() != 3) {
        throw ShapeError("hat_forward: expected [S,H,C] and [S,D,C], got " + ad::to_string(f_cols.shape()) + " and " +
                         ad::to_string(r_cols.shape()));
    }
    const std::size_t s = f_cols.shape()[0];
    const std::size_t c = config.embed_dim;
    if (f_cols.shape()[1] != config.height_bins || f_cols.shape()[2] != c || r_cols.shape()[0] != s ||
        r_cols.shape()[1] != config.depth_bins || r_cols.shape()[2] != c) {
        throw ShapeError("hat_forward: columns " + ad::to_string(f_cols.shape()) + " / " +
                         ad::to_string(r_cols.shape()) + " disagree with config (H=" +
                         std::to_string(config.height_bins) + ", D=" + std::to_string(config.depth_bins) +
                         ", C=" + std::to_string(c) + ")");
    }
    const std::size_t heads = config.num_heads;

    auto h = ad::add(f_cols, tile_sequences(w.pos_height, s));
    auto x = ad::layer_norm(h, w.ln1_gamma, w.ln1_beta);
    const auto& sa = w.self_attn;
    auto self = attend(ad::linear(x, sa.wq, sa.bq), ad::linear(x, sa.wk, sa.bk), ad::linear(x, sa.wv, sa.bv), heads);
    auto a = ad::linear(self.context, sa.wo, sa.bo);

    auto y = ad::layer_norm(ad::add(h, a), w.ln2_gamma, w.ln2_beta);
    auto keys_in = ad::add(r_cols, tile_sequences(w.pos_depth, s));
    const auto& ca = w.cross_attn;
    auto cross = attend(ad::linear(y, ca.wq, ca.bq), ad::linear(keys_in, ca.wk, ca.bk), ad::linear(r_cols, ca.wv),
                        heads);
    auto c_out = ad::linear(cross.context, ca.wo);

    HatOutput out;
    out.fused = ad::add(ad::add(f_cols, a), c_out);
    out.self_residual = a;
    out.cross_context = cross.context;
    out.cross_weights = cross.weights;
    return out;
}

DepthContextWeights make_depth_context_weights(const DepthContextConfig& config, ad::ParamStore& store,
                                               const std::string& prefix) {
    DepthContextWeights w;
    w.depth_w1 = store.create(prefix + "depth.w1", {config.embed_dim, config.hidden}, Init::uniform, config.embed_dim,
                              std::sqrt(2.0));
    w.depth_b1 = store.create(prefix + "depth.b1", {config.hidden}, Init::zeros);
    w.depth_w2 = store.create(prefix + "depth.w2", {config.hidden, config.depth_bins}, Init::uniform, config.hidden);
    w.depth_b2 = store.create(prefix + "depth.b2", {config.depth_bins}, Init::zeros);
    w.ctx_w = store.create(prefix + "ctx.w", {config.embed_dim, config.context_dim}, Init::uniform, config.embed_dim,
                           std::sqrt(2.0));
    w.ctx_b = store.create(prefix + "ctx.b", {config.context_dim}, Init::zeros);
    return w;
}

DepthContext depth_context_heads(const Tensor& features, const DepthContextWeights& w) {
    if (features.rank() == 0) throw ShapeError("depth_context_heads: scalar input");
    DepthContext out;
    auto hidden = ad::relu(ad::linear(features, w.depth_w1, w.depth_b1));
    out.depth_logits = ad::linear(hidden, w.depth_w2, w.depth_b2);
    out.depth = ad::softmax(out.depth_logits, out.depth_logits.rank() - 1);
    out.context = ad::relu(ad::linear(features, w.ctx_w, w.ctx_b));
    return out;
}

}  // namespace hydra::hat
