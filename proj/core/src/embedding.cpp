#include "rdt/embedding.hpp"

#include <cmath>
#include <string>

#include "rdt/error.hpp"

namespace rdt {

void PatchConfig::validate() const {
  if (image_side <= 0 || patch_side <= 0)
    throw DomainError("patch config: non-positive geometry");
  if (image_side % patch_side != 0)
    throw DomainError("patch config: patch side " + std::to_string(patch_side) +
                      " does not divide image side " +
                      std::to_string(image_side));
  if (channels < 1) throw DomainError("patch config: channels < 1");
  if (embed_dim < 2) throw DomainError("patch config: embed dim < 2");
  if (extractor_channels.empty())
    throw DomainError("patch config: extractor needs at least one block");
  for (int c : extractor_channels)
    if (c < 1) throw DomainError("patch config: non-positive extractor width");
  int side = patch_side;
  for (std::size_t i = 0; i < extractor_channels.size(); ++i) {
    if (side % 2 != 0)
      throw DomainError("patch config: block " + std::to_string(i + 1) +
                        " cannot pool an odd side of " + std::to_string(side));
    side /= 2;
  }
}

namespace {

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

EmbeddingParams make_embedding_params(const PatchConfig& cfg, Rng& rng,
                                      bool with_sequence_params) {
  cfg.validate();
  EmbeddingParams p;
  int cin = cfg.channels;
  for (int cout : cfg.extractor_channels) {
    const double bound = 1.0 / std::sqrt(9.0 * cin);
    p.conv_kernels.push_back(uniform_tensor({3, 3, cin, cout}, bound, rng));
    p.conv_biases.push_back(uniform_tensor({cout}, bound, rng));
    cin = cout;
  }
  p.projection = uniform_tensor({cfg.feature_len(), cfg.embed_dim},
                                1.0 / std::sqrt(cfg.feature_len()), rng);
  if (with_sequence_params) {
    p.class_token = uniform_tensor({cfg.embed_dim}, 0.02, rng);
    p.positions =
        uniform_tensor({cfg.sequence_len(), cfg.embed_dim}, 0.02, rng);
  }
  return p;
}

std::vector<Tensor> split_patches(const Tensor& image, const PatchConfig& cfg) {
  cfg.validate();
  const std::vector<int> want{cfg.image_side, cfg.image_side, cfg.channels};
  if (image.shape() != want)
    throw ShapeError("split_patches: image " + shape_str(image.shape()) +
                     " does not match config " + shape_str(want));
  std::vector<Tensor> patches;
  patches.reserve(static_cast<std::size_t>(cfg.patch_count()));
  for (int gy = 0; gy < cfg.grid(); ++gy)
    for (int gx = 0; gx < cfg.grid(); ++gx)
      patches.push_back(slice_block(image, gy * cfg.patch_side,
                                    gx * cfg.patch_side, cfg.patch_side,
                                    cfg.patch_side));
  return patches;
}

Tensor extract_patch_features(const Tensor& patch, const PatchConfig& cfg,
                              const EmbeddingParams& params) {
  const std::vector<int> want{cfg.patch_side, cfg.patch_side, cfg.channels};
  if (patch.shape() != want)
    throw ShapeError("extract_patch_features: patch " +
                     shape_str(patch.shape()) + " does not match config " +
                     shape_str(want));
  if (params.conv_kernels.size() != cfg.extractor_channels.size() ||
      params.conv_biases.size() != cfg.extractor_channels.size())
    throw ShapeError("extract_patch_features: extractor depth mismatch");
  Tensor x = patch;
  for (std::size_t i = 0; i < params.conv_kernels.size(); ++i) {
    x = conv2d(x, params.conv_kernels[i], params.conv_biases[i]);
    x = relu(x);
    x = avg_pool2(x);
  }
  return global_avg_pool(x);
}

Tensor embed_sequence(const Tensor& features, const PatchConfig& cfg,
                      const EmbeddingParams& params) {
  const std::vector<int> want{cfg.patch_count(), cfg.feature_len()};
  if (features.shape() != want)
    throw ShapeError("embed_sequence: features " + shape_str(features.shape()) +
                     " do not match config " + shape_str(want));
  if (params.positions.shape() !=
      std::vector<int>{cfg.sequence_len(), cfg.embed_dim})
    throw ShapeError("embed_sequence: positional table " +
                     shape_str(params.positions.shape()) + " wants " +
                     std::to_string(cfg.sequence_len()) + " rows");
  Tensor projected = matmul(features, params.projection);
  std::vector<Tensor> rows{params.class_token, projected};
  Tensor sequence = concat_rows(rows);
  return add(sequence, params.positions);
}

Tensor embed_poster(const Tensor& image, const PatchConfig& cfg,
                    const EmbeddingParams& params) {
  std::vector<Tensor> patches = split_patches(image, cfg);
  std::vector<Tensor> features;
  features.reserve(patches.size());
  for (const Tensor& patch : patches)
    features.push_back(extract_patch_features(patch, cfg, params));
  Tensor stacked = concat_rows(features);
  return embed_sequence(stacked, cfg, params);
}

}  // namespace rdt
