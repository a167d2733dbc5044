#include "mcevit/fusion.hpp"

#include <cmath>

#include "mcevit/checkpoint.hpp"
#include "mcevit/color.hpp"
#include "mcevit/errors.hpp"

namespace mcevit {

const char* class_name(int label) {
  switch (label) {
    case kClassGan: return "gan";
    case kClassGraphics: return "graphics";
    case kClassReal: return "real";
    default: return "?";
  }
}

void FusionConfig::validate() const {
  vit.validate();
  if (classes != kNumClasses) {
    throw ConfigError("fusion: classes must be " + std::to_string(kNumClasses));
  }
  if (hidden <= 0) throw ConfigError("fusion: hidden must be positive");
  if (pool_kernel <= 0 || pool_stride <= 0) throw ConfigError("fusion: pool params must be positive");
  if (!rgb_only) {
    if (pool_kernel > vit.embed_dim) {
      throw ConfigError("fusion: pool_kernel " + std::to_string(pool_kernel) + " exceeds embed_dim " +
                        std::to_string(vit.embed_dim));
    }
    if (pool_stride == pool_kernel && vit.embed_dim % pool_kernel != 0) {
      throw ConfigError("fusion: embed_dim " + std::to_string(vit.embed_dim) +
                        " not divisible by pool_kernel " + std::to_string(pool_kernel));
    }
    const int align = enrichment.chroma_subsampling == ChromaSubsampling::k420 ? 16 : 8;
    if (vit.image_size % align != 0) {
      throw ConfigError("fusion: image_size " + std::to_string(vit.image_size) +
                        " must align to " + std::to_string(align) + " for the enrichment codec");
    }
  }
  if (enrichment.quality < 1 || enrichment.quality > 100) {
    throw ConfigError("fusion: enrichment quality out of [1,100]");
  }
}

std::int64_t FusionConfig::pooled_width() const {
  return (static_cast<std::int64_t>(vit.embed_dim) - pool_kernel) / pool_stride + 1;
}

std::int64_t FusionConfig::concat_width() const {
  if (rgb_only) return vit.embed_dim;
  return pooled_width() + vit.embed_dim;
}

std::int64_t FusionConfig::head_param_count() const {
  const std::int64_t w = concat_width();
  return w * hidden + hidden + static_cast<std::int64_t>(hidden) * classes + classes;
}

std::int64_t FusionConfig::trainable_param_count() const {
  if (backbone_mode == BackboneMode::frozen) return head_param_count();
  const std::int64_t branch = vit_param_count(vit);
  return head_param_count() + (rgb_only ? branch : 2 * branch);
}

template <typename T>
FusionModelT<T> FusionModelT<T>::init(const FusionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FusionModelT<T> m;
  m.config = cfg;
  Rng rgb_rng(mix_seed(seed, 1));
  m.rgb_branch = VitParamsT<T>::init(cfg.vit, rgb_rng);
  if (!cfg.rgb_only) {
    Rng ycbcr_rng(mix_seed(seed, 2));
    m.ycbcr_branch = VitParamsT<T>::init(cfg.vit, ycbcr_rng);
  }
  Rng head_rng(mix_seed(seed, 3));
  const std::int64_t w = cfg.concat_width();
  m.head_w1 = TensorT<T>::randn({w, cfg.hidden}, head_rng, std::sqrt(2.0 / static_cast<double>(w)));
  m.head_b1 = TensorT<T>::zeros({cfg.hidden});
  m.head_w2 =
      TensorT<T>::randn({cfg.hidden, cfg.classes}, head_rng, std::sqrt(2.0 / cfg.hidden));
  m.head_b2 = TensorT<T>::zeros({cfg.classes});
  m.mark_trainable();
  return m;
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>>> FusionModelT<T>::named_parameters() const {
  std::vector<std::pair<std::string, TensorT<T>>> out = rgb_branch.named_parameters("rgb");
  if (!config.rgb_only) {
    auto y = ycbcr_branch.named_parameters("ycbcr");
    out.insert(out.end(), y.begin(), y.end());
  }
  out.emplace_back("head.w1", head_w1);
  out.emplace_back("head.b1", head_b1);
  out.emplace_back("head.w2", head_w2);
  out.emplace_back("head.b2", head_b2);
  return out;
}

template <typename T>
std::vector<TensorT<T>> FusionModelT<T>::trainable_parameters() const {
  std::vector<TensorT<T>> out;
  if (config.backbone_mode == BackboneMode::end_to_end) {
    auto r = rgb_branch.parameters();
    out.insert(out.end(), r.begin(), r.end());
    if (!config.rgb_only) {
      auto y = ycbcr_branch.parameters();
      out.insert(out.end(), y.begin(), y.end());
    }
  }
  out.push_back(head_w1);
  out.push_back(head_b1);
  out.push_back(head_w2);
  out.push_back(head_b2);
  return out;
}

template <typename T>
std::vector<TensorT<T>> FusionModelT<T>::all_parameters() const {
  std::vector<TensorT<T>> out;
  for (auto& kv : named_parameters()) out.push_back(kv.second);
  return out;
}

template <typename T>
void FusionModelT<T>::mark_trainable() {
  for (auto& t : all_parameters()) t.set_requires_grad(false);
  for (auto& t : trainable_parameters()) t.set_requires_grad(true);
}

template <typename T>
std::int64_t FusionModelT<T>::param_count() const {
  std::int64_t n = 0;
  for (const auto& t : all_parameters()) n += static_cast<std::int64_t>(t.size());
  return n;
}

PreprocessedImage preprocess(const ImageU8& img, const FusionConfig& cfg) {
  if (img.width <= 0 || img.height <= 0 || img.data.empty()) {
    throw ShapeError("preprocess: degenerate image");
  }
  const int s = cfg.vit.image_size;
  const ImageU8 resized = resize_bilinear(img, s, s);
  const std::size_t n = static_cast<std::size_t>(s) * s;

  PreprocessedImage out;
  out.rgb.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = static_cast<float>(resized.data[i * 3 + c]) / 255.0f;
      out.rgb[static_cast<std::size_t>(c) * n + i] = (v - cfg.rgb_norm.mean[c]) / cfg.rgb_norm.stddev[c];
    }
  }

  const EnrichedYCbCr enr = enrich(rgb_to_ycbcr(resized), cfg.enrichment);
  out.enriched.resize(3 * n);
  const std::vector<float>* planes[3] = {&enr.y_plane, &enr.cb_plane, &enr.cr_plane};
  for (int c = 0; c < 3; ++c) {
    const auto& src = *planes[c];
    for (std::size_t i = 0; i < n; ++i) {
      const float v = src[i] / 255.0f;
      out.enriched[static_cast<std::size_t>(c) * n + i] =
          (v - cfg.ycbcr_norm.mean[c]) / cfg.ycbcr_norm.stddev[c];
    }
  }
  return out;
}

template <typename T>
FusedOutput<T> fused_forward(const FusionModelT<T>& model, const std::vector<T>& rgb_planes,
                             const std::vector<T>& enriched_planes, bool record_attention) {
  FusedOutput<T> out;
  TensorT<T> z;
  auto rgb = vit_forward(model.rgb_branch, rgb_planes, record_attention);
  out.rgb_attention = std::move(rgb.attention);
  if (model.config.rgb_only) {
    z = rgb.feature;
  } else {
    TensorT<T> pooled = avg_pool_1d(rgb.feature, model.config.pool_kernel, model.config.pool_stride);
    auto ycbcr = vit_forward(model.ycbcr_branch, enriched_planes, record_attention);
    out.ycbcr_attention = std::move(ycbcr.attention);
    z = concat<T>({pooled, ycbcr.feature}, 0);
  }
  out.concat_feature = z;
  TensorT<T> row = reshape(z, {1, model.config.concat_width()});
  TensorT<T> hidden = relu(add(matmul(row, model.head_w1), model.head_b1));
  out.logits = reshape(add(matmul(hidden, model.head_w2), model.head_b2),
                       {model.config.classes});
  out.probabilities = softmax(out.logits, 0);
  return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> head_forward(const FusionModelT<T>& model, const TensorT<T>& z_rows) {
  if (z_rows.rank() != 2 || z_rows.dim(1) != model.config.concat_width()) {
    throw ShapeError("head_forward: expected rows of width " +
                     std::to_string(model.config.concat_width()) + ", got " + shape_str(z_rows.shape()));
  }
  TensorT<T> hidden = relu(add(matmul(z_rows, model.head_w1), model.head_b1));
  TensorT<T> logits = add(matmul(hidden, model.head_w2), model.head_b2);
  return {logits, softmax(logits, 1)};
}

int argmax_label(const std::vector<float>& probabilities) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probabilities.size()); ++i) {
    if (probabilities[static_cast<std::size_t>(i)] > probabilities[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

int predict(const FusionModelT<float>& model, const ImageU8& img) {
  NoGrad guard;
  const PreprocessedImage pp = preprocess(img, model.config);
  const auto out = fused_forward(model, pp.rgb, pp.enriched);
  return argmax_label(out.probabilities.values());
}

void save_model(const FusionModelT<float>& model, const std::string& path) {
  save_checkpoint(model.named_parameters(), path);
}

FusionModelT<float> load_model(const FusionConfig& cfg, const std::string& path) {
  FusionModelT<float> model = FusionModelT<float>::init(cfg, 0);
  auto stored = load_checkpoint(path);
  auto live = model.named_parameters();
  if (stored.size() != live.size()) {
    throw ConfigError("checkpoint " + path + " holds " + std::to_string(stored.size()) +
                      " tensors, config expects " + std::to_string(live.size()));
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (stored[i].first != live[i].first || stored[i].second.shape() != live[i].second.shape()) {
      throw ConfigError("checkpoint mismatch at " + stored[i].first + " " +
                        shape_str(stored[i].second.shape()) + ", config expects " + live[i].first +
                        " " + shape_str(live[i].second.shape()));
    }
    live[i].second.mutable_values() = stored[i].second.values();
  }
  return model;
}

template struct FusionModelT<float>;
template struct FusionModelT<double>;
template FusedOutput<float> fused_forward<float>(const FusionModelT<float>&, const std::vector<float>&,
                                                 const std::vector<float>&, bool);
template FusedOutput<double> fused_forward<double>(const FusionModelT<double>&,
                                                   const std::vector<double>&,
                                                   const std::vector<double>&, bool);
template std::pair<TensorT<float>, TensorT<float>> head_forward<float>(const FusionModelT<float>&,
                                                                       const TensorT<float>&);
template std::pair<TensorT<double>, TensorT<double>> head_forward<double>(const FusionModelT<double>&,
                                                                          const TensorT<double>&);

}  // namespace mcevit
