#pragma once

#include <string>

#include "hydra/tensor/params.hpp"
#include "hydra/tensor/tensor.hpp"

namespace hydra::hat {

using ad::Tensor;

struct HatConfig {
    std::size_t embed_dim = 32;
    std::size_t num_heads = 4;
    std::size_t height_bins = 4;  // image feature rows
    std::size_t depth_bins = 30;
    std::size_t downsample = 16;

    std::size_t head_dim() const { return embed_dim / num_heads; }
    void validate() const;
};

struct AttentionWeights {
    Tensor wq, bq;
    Tensor wk, bk;
    Tensor wv, bv;  // bv undefined for the cross-attention block
    Tensor wo, bo;  // bo undefined for the cross-attention block
};

/// Parameter names (prefix "hat."):
///   pos_height [H,C], pos_depth [D,C], ln1.{gamma,beta}, ln2.{gamma,beta},
///   self.{wq,bq,wk,bk,wv,bv,wo,bo}, cross.{wq,bq,wk,bk,wv,wo}
/// Output projections self.wo, self.bo and cross.wo start at zero.
struct HatWeights {
    Tensor pos_height;
    Tensor pos_depth;
    Tensor ln1_gamma, ln1_beta;
    Tensor ln2_gamma, ln2_beta;
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
};

HatWeights make_hat_weights(const HatConfig& config, ad::ParamStore& store, const std::string& prefix = "hat.");

/// [B,N,H,W,C] -> [B*N*W, H, C]; element (b,n,h,w,c) lands in sequence
/// b*N*W + n*W + w at position h.
Tensor column_batch_reshape(const Tensor& f);
/// Inverse of column_batch_reshape for the given B, N, W.
Tensor column_batch_unreshape(const Tensor& cols, std::size_t batch, std::size_t cameras, std::size_t width);

/// Radar frustum planes [B,N,D,W,C] -> [B*N*W, D, C] with the same sequence order.
Tensor radar_column_reshape(const Tensor& r);

struct HatOutput {
    Tensor fused;          // [S, H, C]
    Tensor self_residual;  // a, after the out projection
    Tensor cross_context;  // cross-attention head outputs before the out projection [S, H, C]
    Tensor cross_weights;  // [S*heads, H, D]
};

/// f_cols [S,H,C], r_cols [S,D,C].
/// h = F + posH, a = SelfAttn(LN1(h)), c = CrossAttn(LN2(h + a); K = (R + posD), V = R), F' = F + a + c.
HatOutput hat_forward(const Tensor& f_cols, const Tensor& r_cols, const HatWeights& w, const HatConfig& config);

struct DepthContextConfig {
    std::size_t embed_dim = 32;
    std::size_t hidden = 32;
    std::size_t depth_bins = 30;
    std::size_t context_dim = 32;
};

struct DepthContextWeights {
    Tensor depth_w1, depth_b1;
    Tensor depth_w2, depth_b2;
    Tensor ctx_w, ctx_b;
};

/// Parameter names (prefix "heads.pv."): depth.{w1,b1,w2,b2}, ctx.{w,b}.
DepthContextWeights make_depth_context_weights(const DepthContextConfig& config, ad::ParamStore& store,
                                               const std::string& prefix = "heads.pv.");

struct DepthContext {
    Tensor depth_logits;  // [..., D]
    Tensor depth;         // softmax over the last axis
    Tensor context;       // [..., C_ctx]
};

/// Works on any leading dims; usually [B,N,H,W,C].
DepthContext depth_context_heads(const Tensor& features, const DepthContextWeights& w);

}  // namespace hydra::hat
