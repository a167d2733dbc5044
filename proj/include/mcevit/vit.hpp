#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcevit/tensor.hpp"

namespace mcevit {

struct VitConfig {
  int image_size = 224;
  int patch_size = 16;
  int in_planes = 3;
  int embed_dim = 128;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid() + 1; }
  int patch_dim() const { return in_planes * patch_size * patch_size; }
  int mlp_dim() const { return static_cast<int>(embed_dim * mlp_ratio); }
};

// Parameter count of one encoder, from config alone.
std::int64_t vit_param_count(const VitConfig& cfg);

template <typename T>
struct VitLayerT {
  TensorT<T> ln1_gamma, ln1_beta;
  TensorT<T> wq, bq, wk, bk, wv, bv;
  TensorT<T> wo, bo;
  TensorT<T> ln2_gamma, ln2_beta;
  TensorT<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Pre-norm encoder: patch embedding, class token, learned positional
// embeddings, depth x [LN, MHSA, residual, LN, MLP(GELU), residual],
// final LN. The class-token row of the final LN output is the feature.
template <typename T>
struct VitParamsT {
  VitConfig config;
  TensorT<T> embed_w, embed_b;  // patch_dim x D, D
  TensorT<T> cls_token;         // 1 x D
  TensorT<T> pos_embed;         // tokens x D
  std::vector<VitLayerT<T>> layers;
  TensorT<T> final_gamma, final_beta;

  static VitParamsT init(const VitConfig& cfg, Rng& rng);

  // Stable enumeration order; `prefix` namespames the branch.
  std::vector<std::pair<std::string, TensorT<T>>> named_parameters(const std::string& prefix) const;
  std::vector<TensorT<T>> parameters() const;
  void set_requires_grad(bool rg);
  std::int64_t param_count() const;
};

// Per-layer post-softmax attention probabilities, detached from the graph.
// Shape per layer: heads x tokens x tokens.
struct AttentionRecord {
  int heads = 0;
  int tokens = 0;
  std::vector<std::vector<float>> layers;
};

// Rearranges normalized planes (3 x H x W, concatenated) into the patch
// matrix consumed by the embedding. Plain data movement, no gradient.
template <typename T>
TensorT<T> patchify(const std::vector<T>& planes, const VitConfig& cfg);

template <typename T>
struct VitOutput {
  TensorT<T> feature;  // embed_dim
  std::optional<AttentionRecord> attention;
};

template <typename T>
VitOutput<T> vit_forward(const VitParamsT<T>& params, const std::vector<T>& planes,
                         bool record_attention = false);

// Head-averaged, identity-augmented, row-renormalized attention multiplied
// across layers; the class-token row over patch tokens, min-max normalized
// to [0,1] (all zeros when the row is constant), reshaped to the patch grid.
std::vector<float> attention_rollout(const AttentionRecord& record);

using VitParams = VitParamsT<float>;
using VitLayer = VitLayerT<float>;

}  // namespace mcevit
