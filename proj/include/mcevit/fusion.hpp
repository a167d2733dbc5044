#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcevit/image.hpp"
#include "mcevit/jpeg_sim.hpp"
#include "mcevit/vit.hpp"

namespace mcevit {

enum class BackboneMode { frozen, end_to_end };

inline constexpr int kClassGan = 0;
inline constexpr int kClassGraphics = 1;
inline constexpr int kClassReal = 2;
inline constexpr int kNumClasses = 3;
const char* class_name(int label);

struct PlaneNormalization {
  std::array<float, 3> mean = {0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev = {0.5f, 0.5f, 0.5f};
};

// Two-branch model: an RGB encoder whose feature is average-pooled, and a
// chroma-error-enriched YCbCr encoder, concatenated into a relu MLP head.
// rgb_only drops the second branch and the pooling (ablation model).
struct FusionConfig {
  VitConfig vit;
  int pool_kernel = 16;
  int pool_stride = 16;
  int hidden = 512;
  int classes = kNumClasses;
  JpegSimConfig enrichment;  // quality 90, 4:2:0
  PlaneNormalization rgb_norm;
  PlaneNormalization ycbcr_norm;
  BackboneMode backbone_mode = BackboneMode::frozen;
  bool rgb_only = false;

  void validate() const;
  std::int64_t pooled_width() const;
  std::int64_t concat_width() const;  // head input width
  std::int64_t head_param_count() const;
  std::int64_t trainable_param_count() const;  // honors backbone_mode
};

template <typename T>
struct FusionModelT {
  FusionConfig config;
  VitParamsT<T> rgb_branch;
  VitParamsT<T> ycbcr_branch;  // unused when config.rgb_only
  TensorT<T> head_w1, head_b1, head_w2, head_b2;

  static FusionModelT init(const FusionConfig& cfg, std::uint64_t seed);

  std::vector<std::pair<std::string, TensorT<T>>> named_parameters() const;
  std::vector<TensorT<T>> trainable_parameters() const;  // honors backbone_mode
  std::vector<TensorT<T>> all_parameters() const;
  void mark_trainable();  // sets requires_grad per backbone_mode
  std::int64_t param_count() const;
};

using FusionModel = FusionModelT<float>;

struct PreprocessedImage {
  std::vector<float> rgb;       // 3 x S x S planar, normalized
  std::vector<float> enriched;  // 3 x S x S planar, normalized (Y, Cb, Cr)
};

// Bilinear-resizes to the encoder input size, then produces both branch
// inputs. Branch 1 is RGB scaled to [0,1] and normalized; branch 2 is the
// chroma-error-enriched YCbCr scaled by 1/255 and normalized with the same
// statistics (enriched excursions outside [0,1] pass through).
PreprocessedImage preprocess(const ImageU8& img, const FusionConfig& cfg);

template <typename T>
struct FusedOutput {
  TensorT<T> concat_feature;  // head input z
  TensorT<T> logits;
  TensorT<T> probabilities;
  std::optional<AttentionRecord> rgb_attention;
  std::optional<AttentionRecord> ycbcr_attention;
};

template <typename T>
FusedOutput<T> fused_forward(const FusionModelT<T>& model, const std::vector<T>& rgb_planes,
                             const std::vector<T>& enriched_planes, bool record_attention = false);

// Forward from cached branch features (frozen-backbone training path).
template <typename T>
std::pair<TensorT<T>, TensorT<T>> head_forward(const FusionModelT<T>& model, const TensorT<T>& z_rows);

// Argmax with ties broken toward the lowest class index.
int argmax_label(const std::vector<float>& probabilities);

int predict(const FusionModelT<float>& model, const ImageU8& img);

void save_model(const FusionModelT<float>& model, const std::string& path);
FusionModelT<float> load_model(const FusionConfig& cfg, const std::string& path);

}  // namespace mcevit
