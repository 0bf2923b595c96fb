#ifndef RDT_MODEL_HPP_
#define RDT_MODEL_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/embedding.hpp"
#include "rdt/tensor.hpp"

namespace rdt {

// Per-head projection matrices. Per-head width is floor(D / heads); the
// output map accepts heads * head_dim columns, which may be narrower than D.
struct AttentionParams {
  int heads = 1;
  std::vector<Tensor> query;  // per head: [D, head_dim]
  std::vector<Tensor> key;    // per head: [D, head_dim]
  std::vector<Tensor> value;  // per head: [D, head_dim]
  Tensor output;              // [heads * head_dim, D]
};

struct EncoderParams {
  Tensor norm1_gain, norm1_bias;  // [D]
  AttentionParams attention;
  Tensor norm2_gain, norm2_bias;  // [D]
  Tensor mlp_w1, mlp_b1;          // [D, 2D], [2D]
  Tensor mlp_w2, mlp_b2;          // [2D, D], [D]
};

// Encoder l receives a learned (l*D -> D) projection of the concatenation of
// the embedded input sequence and every previous encoder's output.
struct DenseStackParams {
  std::vector<EncoderParams> encoders;
  std::vector<Tensor> transition_weights;  // l: [l*D, D]
  std::vector<Tensor> transition_biases;   // l: [D]
  Tensor final_gain, final_bias;           // [D], applied to the class row
};

struct HeadParams {
  Tensor hidden_weight, hidden_bias;  // [D, D/2], [D/2]
  Tensor out_weight, out_bias;        // [D/2, classes], [classes]
};

// Per-genre confidence scores; sigmoid output keeps each strictly in (0, 1).
struct ConfidenceVector {
  std::vector<double> scores;
};

// Softmaxed attention matrices captured during a forward pass:
// layers[encoder][head] is T x T with rows summing to 1.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> layers;
};

// softmax(Q K^T / sqrt(head_dim)) V per head, heads concatenated and mapped
// back to width D. When head_weights is non-null the per-head softmax
// matrices are appended to it.
Tensor multi_head_self_attention(const Tensor& z, const AttentionParams& p,
                                 std::vector<Tensor>* head_weights = nullptr);

// Pre-norm residual encoder: z' = MSA(LN(z)) + z, out = MLP(LN(z')) + z'.
Tensor encoder_block(const Tensor& z_in, const EncoderParams& p,
                     std::vector<Tensor>* head_weights = nullptr);

// Runs the densely connected encoder pile and returns the normalized class
// row: LN(row 0 of the last encoder output).
Tensor dense_encoder_stack(const Tensor& z0, const DenseStackParams& p,
                           AttentionTrace* trace = nullptr);

// Plain residual chain: each encoder consumes only its predecessor's output
// (transition lists must be empty). Returns LN(row 0) like the dense stack.
Tensor chain_encoder_stack(const Tensor& z0, const DenseStackParams& p,
                           AttentionTrace* trace = nullptr);

// sigmoid(W2 relu(W1 y' + b1) + b2).
Tensor classify_head(const Tensor& y_prime, const HeadParams& p);

// The three base architectures the ensemble draws from:
//   r   - patch features mean-pooled straight into the head, no transformer
//   rt  - residual transformer chain without dense connectivity
//   rdt - densely connected residual transformer (the full model)
enum class ModelKind { r, rt, rdt };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::rdt;
  PatchConfig patch;
  int encoders = 2;  // L
  int heads = 4;     // h
  int classes = 13;  // output width

  int head_dim() const { return patch.embed_dim / heads; }
  void validate() const;
};

// A full poster-to-scores model: patch embedding, dense encoder stack, and
// classification head, with deterministic seed-driven initialization.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, GenreVocabulary vocab, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const GenreVocabulary& vocabulary() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }

  const EmbeddingParams& embedding() const { return embed_; }
  const DenseStackParams& stack() const { return stack_; }
  const HeadParams& head() const { return head_; }

  // Differentiable scores tensor of length `classes`.
  Tensor forward(const Tensor& image, AttentionTrace* trace = nullptr) const;
  ConfidenceVector predict(const Tensor& image) const;

  // Every learnable tensor, in a fixed documented order. Mutating their data
  // in place (optimizer steps) is the supported update path.
  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  // Stops/starts gradient flow into the patch feature extractor for graphs
  // built after the call.
  void set_extractor_frozen(bool frozen);

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static Model load(std::istream& in, const std::string& origin);
  static Model load_file(const std::string& path);

 private:
  ModelConfig cfg_;
  GenreVocabulary vocab_ = GenreVocabulary::imdb13();
  std::uint64_t seed_ = 0;
  EmbeddingParams embed_;
  DenseStackParams stack_;
  HeadParams head_;
};

}  // namespace rdt

#endif  // RDT_MODEL_HPP_
