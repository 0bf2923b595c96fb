#ifndef RDT_TRAIN_HPP_
#define RDT_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/model.hpp"
#include "rdt/tensor.hpp"

namespace rdt {

// Asymmetric-loss shaping: focusing exponents for positive/negative terms
// and the probability margin that clips easy negatives to zero loss.
struct AslConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 1.0;
  double margin = 0.2;
  void validate() const;
};

// Mean over samples x genres of
//   -[ y (1-p)^{gamma_pos} log p + (1-y) p_m^{gamma_neg} log(1-p_m) ]
// with p_m = max(p - margin, 0). scores is an [N, classes] graph tensor with
// every entry strictly inside (0, 1); labels supplies y.
Tensor asl_loss(const Tensor& scores, const std::vector<MultiHotLabel>& labels,
                const AslConfig& cfg);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long step = 0;  // completed steps; bias correction uses step + 1

  static AdamState for_params(const std::vector<Tensor>& params);
};

// One bias-corrected Adam update applied in place. grads[i] must match
// params[i] in size.
void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               const OptimizerConfig& cfg);
// Convenience form reading each parameter's accumulated gradient.
void adam_step_from_grads(std::vector<Tensor>& params, AdamState& state,
                          const OptimizerConfig& cfg);

struct TrainConfig {
  int batch_size = 32;
  int patience = 10;
  int max_epochs = 500;
  std::uint64_t seed = 0;
  // Stop once the epoch's training loss dips below this value; 0 disables.
  double target_train_loss = 0.0;
  bool freeze_extractor = false;
  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool hit_target = false;
};

// Early-stopped mini-batch training over in-memory posters. Shuffles with a
// generator seeded once from cfg.seed (a fresh permutation every epoch),
// evaluates validation loss after each epoch, stops after `patience` epochs
// without strict improvement, and restores the best-validation weights.
// Non-finite losses abort with a numeric error.
TrainResult train_model(Model& model, const std::vector<Tensor>& train_images,
                        const std::vector<MultiHotLabel>& train_labels,
                        const std::vector<Tensor>& val_images,
                        const std::vector<MultiHotLabel>& val_labels,
                        const AslConfig& asl, const OptimizerConfig& opt,
                        const TrainConfig& cfg);

// The three highest-scoring 1-based class ids in selection order (score
// descending, ties toward the lower id).
std::vector<int> top3_ids(const ConfidenceVector& rho);

// Multi-hot label with bits at the 3 largest scores; score ties break toward
// the lower class id.
MultiHotLabel top3_predict(const ConfidenceVector& rho);

void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history);
std::vector<EpochStats> read_history_csv(std::istream& in,
                                         const std::string& origin);

}  // namespace rdt

#endif  // RDT_TRAIN_HPP_
