#ifndef RDT_EMBEDDING_HPP_
#define RDT_EMBEDDING_HPP_

#include <vector>

#include "rdt/rng.hpp"
#include "rdt/tensor.hpp"

namespace rdt {

// Geometry and width settings for turning a poster into a token sequence.
struct PatchConfig {
  int image_side = 64;   // square input side after resize
  int patch_side = 16;   // square patch side; must divide image_side
  int channels = 3;
  int embed_dim = 32;    // token width D
  // Output channels of each extractor block (conv3x3 -> relu -> 2x2 avg-pool);
  // the last entry is the pooled feature length.
  std::vector<int> extractor_channels = {8, 32};

  int grid() const { return image_side / patch_side; }
  int patch_count() const { return grid() * grid(); }
  int feature_len() const { return extractor_channels.back(); }
  int sequence_len() const { return patch_count() + 1; }  // + class token
  void validate() const;
};

// Learned state for patching and embedding. The extractor weights are shared
// across all patches of a poster.
struct EmbeddingParams {
  std::vector<Tensor> conv_kernels;  // block i: [3, 3, c_in, c_out]
  std::vector<Tensor> conv_biases;   // block i: [c_out]
  Tensor projection;                 // [F, D]
  Tensor class_token;                // [D]
  Tensor positions;                  // [n_p + 1, D]
};

// Fresh parameters drawn from the shared init scheme: weight matrices and
// kernels uniform in +/- 1/sqrt(fan_in), class token and positional rows
// uniform in +/- 0.02. When with_sequence_params is false the class token
// and positional table are left empty (for heads that pool features
// directly) and no draws are consumed for them.
EmbeddingParams make_embedding_params(const PatchConfig& cfg, Rng& rng,
                                      bool with_sequence_params = true);

// Non-overlapping row-major tiling into n_p patches of patch_side^2 pixels.
std::vector<Tensor> split_patches(const Tensor& image, const PatchConfig& cfg);

// Shared-weight feature extractor: per block conv3x3 (same padding) -> relu
// -> 2x2 average pool, then global average pooling to a length-F vector.
Tensor extract_patch_features(const Tensor& patch, const PatchConfig& cfg,
                              const EmbeddingParams& params);

// Projects per-patch features to token width, prepends the class token, and
// adds the positional table: row 0 = class_token + positions[0], row i =
// features[i-1] * projection + positions[i].
Tensor embed_sequence(const Tensor& features, const PatchConfig& cfg,
                      const EmbeddingParams& params);

// Full pipeline: split -> extract (each patch) -> embed. Returns the
// (n_p + 1) x D input sequence for the encoder stack.
Tensor embed_poster(const Tensor& image, const PatchConfig& cfg,
                    const EmbeddingParams& params);

}  // namespace rdt

#endif  // RDT_EMBEDDING_HPP_
