#ifndef RDT_CONFIG_HPP_
#define RDT_CONFIG_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/embedding.hpp"
#include "rdt/ensemble.hpp"
#include "rdt/model.hpp"
#include "rdt/refine.hpp"
#include "rdt/train.hpp"

namespace rdt {

// Every tunable knob of the pipeline in one bundle, covering model shape,
// loss, optimizer, training schedule, dataset split, refinement thresholds,
// and the ensemble weight search. Defaults describe the small configuration
// exercised by the test suite.
struct HyperParams {
  ModelKind kind = ModelKind::rdt;
  int image_size = 64;
  int patch_size = 16;
  int embed_dim = 32;
  std::vector<int> extractor_channels = {8, 32};
  int encoders = 2;
  int heads = 4;
  std::vector<std::string> vocabulary = GenreVocabulary::imdb13().labels();

  double gamma_pos = 0.0;
  double gamma_neg = 1.0;
  double margin = 0.2;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  int batch_size = 32;
  int patience = 10;
  int max_epochs = 500;
  double target_train_loss = 0.0;
  bool freeze_extractor = false;

  int split_train = 8;
  int split_val = 1;
  int split_test = 1;

  double tau = 0.3;
  double tau_prime = 0.03;

  double grid_step = 0.05;
  SelectionMetric grid_metric = SelectionMetric::balanced_accuracy;

  std::uint64_t seed = 0;

  // Views onto the per-module config types.
  GenreVocabulary make_vocabulary() const;
  ModelConfig model_config() const;
  AslConfig asl_config() const;
  OptimizerConfig optimizer_config() const;
  TrainConfig train_config() const;
  SplitRatios split_ratios() const;
  RefineConfig refine_config() const;
};

// Assigns one named parameter from its text form. Unknown keys and
// unparseable values raise ParseError; `where` prefixes every message.
void set_hyper_param(HyperParams& params, const std::string& key,
                     const std::string& value, const std::string& where);

// Reads "key=value" lines; '#' starts a comment and blank lines are skipped.
// Assignments apply in file order on top of `params`, so a repeated key ends
// up with its last value; each shadowed assignment appends a notice to
// `warnings` when given. Malformed lines and unknown keys raise ParseError
// with "<origin>:<line>".
void load_hyper_params(std::istream& in, const std::string& origin,
                       HyperParams& params,
                       std::vector<std::string>* warnings = nullptr);
void load_hyper_params_file(const std::string& path, HyperParams& params,
                            std::vector<std::string>* warnings = nullptr);

// Applies "key=value" override strings in order (later wins).
void apply_overrides(HyperParams& params,
                     const std::vector<std::string>& overrides);

// The full key list, for documentation and error messages.
const std::vector<std::string>& hyper_param_keys();

}  // namespace rdt

#endif  // RDT_CONFIG_HPP_
