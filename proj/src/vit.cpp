#include "mcevit/vit.hpp"

#include <cmath>

#include "mcevit/errors.hpp"

namespace mcevit {

void VitConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw ConfigError("vit: image_size " + std::to_string(image_size) +
                      " must be a positive multiple of patch_size " + std::to_string(patch_size));
  }
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) +
                      " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (depth <= 0) throw ConfigError("vit: depth must be positive");
  if (in_planes != 3) throw ConfigError("vit: in_planes must be 3");
  if (mlp_ratio <= 0.0) throw ConfigError("vit: mlp_ratio must be positive");
}

std::int64_t vit_param_count(const VitConfig& cfg) {
  const std::int64_t d = cfg.embed_dim;
  const std::int64_t pd = cfg.patch_dim();
  const std::int64_t t = cfg.tokens();
  const std::int64_t m = cfg.mlp_dim();
  const std::int64_t per_layer = 2 * d                 // ln1
                                 + 3 * (d * d + d)     // q,k,v
                                 + d * d + d           // out proj
                                 + 2 * d               // ln2
                                 + d * m + m + m * d + d;
  return pd * d + d   // embed
         + d          // cls
         + t * d      // pos
         + cfg.depth * per_layer + 2 * d;  // final ln
}

namespace {

template <typename T>
TensorT<T> weight_init(Shape shape, Rng& rng) {
  return TensorT<T>::randn(std::move(shape), rng, 0.02);
}

}  // namespace

template <typename T>
VitParamsT<T> VitParamsT<T>::init(const VitConfig& cfg, Rng& rng) {
  cfg.validate();
  VitParamsT<T> p;
  p.config = cfg;
  const std::int64_t d = cfg.embed_dim;
  p.embed_w = weight_init<T>({cfg.patch_dim(), d}, rng);
  p.embed_b = TensorT<T>::zeros({d});
  p.cls_token = weight_init<T>({1, d}, rng);
  p.pos_embed = weight_init<T>({cfg.tokens(), d}, rng);
  p.layers.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& layer : p.layers) {
    layer.ln1_gamma = TensorT<T>::filled({d}, T(1));
    layer.ln1_beta = TensorT<T>::zeros({d});
    layer.wq = weight_init<T>({d, d}, rng);
    layer.bq = TensorT<T>::zeros({d});
    layer.wk = weight_init<T>({d, d}, rng);
    layer.bk = TensorT<T>::zeros({d});
    layer.wv = weight_init<T>({d, d}, rng);
    layer.bv = TensorT<T>::zeros({d});
    layer.wo = weight_init<T>({d, d}, rng);
    layer.bo = TensorT<T>::zeros({d});
    layer.ln2_gamma = TensorT<T>::filled({d}, T(1));
    layer.ln2_beta = TensorT<T>::zeros({d});
    layer.mlp_w1 = weight_init<T>({d, cfg.mlp_dim()}, rng);
    layer.mlp_b1 = TensorT<T>::zeros({cfg.mlp_dim()});
    layer.mlp_w2 = weight_init<T>({cfg.mlp_dim(), d}, rng);
    layer.mlp_b2 = TensorT<T>::zeros({d});
  }
  p.final_gamma = TensorT<T>::filled({d}, T(1));
  p.final_beta = TensorT<T>::zeros({d});
  return p;
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>>> VitParamsT<T>::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, TensorT<T>>> out;
  out.emplace_back(prefix + ".embed.w", embed_w);
  out.emplace_back(prefix + ".embed.b", embed_b);
  out.emplace_back(prefix + ".cls", cls_token);
  out.emplace_back(prefix + ".pos", pos_embed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string lp = prefix + ".layer" + std::to_string(i);
    const auto& l = layers[i];
    out.emplace_back(lp + ".ln1.g", l.ln1_gamma);
    out.emplace_back(lp + ".ln1.b", l.ln1_beta);
    out.emplace_back(lp + ".attn.wq", l.wq);
    out.emplace_back(lp + ".attn.bq", l.bq);
    out.emplace_back(lp + ".attn.wk", l.wk);
    out.emplace_back(lp + ".attn.bk", l.bk);
    out.emplace_back(lp + ".attn.wv", l.wv);
    out.emplace_back(lp + ".attn.bv", l.bv);
    out.emplace_back(lp + ".attn.wo", l.wo);
    out.emplace_back(lp + ".attn.bo", l.bo);
    out.emplace_back(lp + ".ln2.g", l.ln2_gamma);
    out.emplace_back(lp + ".ln2.b", l.ln2_beta);
    out.emplace_back(lp + ".mlp.w1", l.mlp_w1);
    out.emplace_back(lp + ".mlp.b1", l.mlp_b1);
    out.emplace_back(lp + ".mlp.w2", l.mlp_w2);
    out.emplace_back(lp + ".mlp.b2", l.mlp_b2);
  }
  out.emplace_back(prefix + ".final_ln.g", final_gamma);
  out.emplace_back(prefix + ".final_ln.b", final_beta);
  return out;
}

template <typename T>
std::vector<TensorT<T>> VitParamsT<T>::parameters() const {
  std::vector<TensorT<T>> out;
  for (auto& kv : named_parameters("p")) out.push_back(kv.second);
  return out;
}

template <typename T>
void VitParamsT<T>::set_requires_grad(bool rg) {
  for (auto& t : parameters()) t.set_requires_grad(rg);
}

template <typename T>
std::int64_t VitParamsT<T>::param_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) n += static_cast<std::int64_t>(t.size());
  return n;
}

template <typename T>
TensorT<T> patchify(const std::vector<T>& planes, const VitConfig& cfg) {
  const int s = cfg.image_size;
  const int p = cfg.patch_size;
  const int g = cfg.grid();
  if (planes.size() != static_cast<std::size_t>(3) * s * s) {
    throw ShapeError("patchify: expected " + std::to_string(3 * s * s) + " plane values, got " +
                     std::to_string(planes.size()));
  }
  std::vector<T> out(static_cast<std::size_t>(g) * g * cfg.patch_dim());
  std::size_t o = 0;
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px)
      for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            out[o++] = planes[static_cast<std::size_t>(c) * s * s + (py * p + dy) * s + px * p + dx];
  return TensorT<T>::from_vector({g * g, cfg.patch_dim()}, std::move(out));
}

template <typename T>
VitOutput<T> vit_forward(const VitParamsT<T>& params, const std::vector<T>& planes,
                         bool record_attention) {
  const VitConfig& cfg = params.config;
  const std::int64_t d = cfg.embed_dim;
  const std::int64_t t = cfg.tokens();
  const std::int64_t h = cfg.heads;
  const std::int64_t dh = d / h;

  TensorT<T> x = add(matmul(patchify(planes, cfg), params.embed_w), params.embed_b);
  x = concat<T>({params.cls_token, x}, 0);
  x = add(x, params.pos_embed);

  VitOutput<T> out;
  if (record_attention) {
    out.attention = AttentionRecord{};
    out.attention->heads = static_cast<int>(h);
    out.attention->tokens = static_cast<int>(t);
  }

  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (const auto& layer : params.layers) {
    TensorT<T> y = layer_norm(x, layer.ln1_gamma, layer.ln1_beta);
    // t x d -> h x t x dh
    const auto split_heads = [&](const TensorT<T>& m) {
      return transpose(reshape(m, {t, h, dh}), {1, 0, 2});
    };
    TensorT<T> q = split_heads(add(matmul(y, layer.wq), layer.bq));
    TensorT<T> k = split_heads(add(matmul(y, layer.wk), layer.bk));
    TensorT<T> v = split_heads(add(matmul(y, layer.wv), layer.bv));
    TensorT<T> scores = scale(matmul(q, transpose(k, {0, 2, 1})), inv_sqrt_dh);
    TensorT<T> attn = softmax(scores, 2);
    if (out.attention) {
      std::vector<float> probs(attn.size());
      for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = static_cast<float>(attn.values()[i]);
      out.attention->layers.push_back(std::move(probs));
    }
    TensorT<T> ctx = reshape(transpose(matmul(attn, v), {1, 0, 2}), {t, d});
    x = add(x, add(matmul(ctx, layer.wo), layer.bo));

    TensorT<T> z = layer_norm(x, layer.ln2_gamma, layer.ln2_beta);
    z = add(matmul(gelu(add(matmul(z, layer.mlp_w1), layer.mlp_b1)), layer.mlp_w2), layer.mlp_b2);
    x = add(x, z);
  }
  x = layer_norm(x, params.final_gamma, params.final_beta);
  out.feature = reshape(slice(x, 0, 0, 1), {d});
  return out;
}

std::vector<float> attention_rollout(const AttentionRecord& record) {
  if (record.layers.empty()) throw ShapeError("attention_rollout: empty record");
  const int t = record.tokens;
  const int h = record.heads;
  const std::size_t n = static_cast<std::size_t>(t) * t;
  std::vector<double> rollout(n, 0.0);
  for (int i = 0; i < t; ++i) rollout[static_cast<std::size_t>(i) * t + i] = 1.0;

  std::vector<double> avg(n);
  std::vector<double> next(n);
  for (const auto& layer : record.layers) {
    if (layer.size() != static_cast<std::size_t>(h) * n) {
      throw ShapeError("attention_rollout: layer has " + std::to_string(layer.size()) +
                       " values, expected " + std::to_string(h * n));
    }
    // Head average, identity augmentation, row renormalization.
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int head = 0; head < h; ++head) acc += layer[static_cast<std::size_t>(head) * n + i];
      avg[i] = acc / h;
    }
    for (int r = 0; r < t; ++r) {
      avg[static_cast<std::size_t>(r) * t + r] += 1.0;
      double rowsum = 0.0;
      for (int c = 0; c < t; ++c) rowsum += avg[static_cast<std::size_t>(r) * t + c];
      for (int c = 0; c < t; ++c) avg[static_cast<std::size_t>(r) * t + c] /= rowsum;
    }
    // next = avg * rollout
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < t; ++i)
      for (int k = 0; k < t; ++k) {
        const double a = avg[static_cast<std::size_t>(i) * t + k];
        for (int j = 0; j < t; ++j)
          next[static_cast<std::size_t>(i) * t + j] += a * rollout[static_cast<std::size_t>(k) * t + j];
      }
    std::swap(rollout, next);
  }

  // Class-token row over patch tokens, min-max normalized.
  std::vector<float> heat(static_cast<std::size_t>(t - 1));
  double lo = rollout[1], hi = rollout[1];
  for (int j = 1; j < t; ++j) {
    lo = std::min(lo, rollout[static_cast<std::size_t>(j)]);
    hi = std::max(hi, rollout[static_cast<std::size_t>(j)]);
  }
  for (int j = 1; j < t; ++j) {
    const double v = rollout[static_cast<std::size_t>(j)];
    heat[static_cast<std::size_t>(j - 1)] = hi > lo ? static_cast<float>((v - lo) / (hi - lo)) : 0.0f;
  }
  return heat;
}

template struct VitParamsT<float>;
template struct VitParamsT<double>;
template TensorT<float> patchify<float>(const std::vector<float>&, const VitConfig&);
template TensorT<double> patchify<double>(const std::vector<double>&, const VitConfig&);
template VitOutput<float> vit_forward<float>(const VitParamsT<float>&, const std::vector<float>&, bool);
template VitOutput<double> vit_forward<double>(const VitParamsT<double>&, const std::vector<double>&, bool);

}  // namespace mcevit
