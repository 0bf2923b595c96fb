#ifndef RDT_ENSEMBLE_HPP_
#define RDT_ENSEMBLE_HPP_

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/model.hpp"

namespace rdt {

// Convex fusion weights over three score sources, in a fixed source order.
struct EnsembleWeights {
  std::array<double, 3> alpha{1.0, 0.0, 0.0};
  // Each weight must lie in [0, 1] and they must sum to 1 within 1e-9.
  void validate() const;
};

// Elementwise weighted mean of three equal-length confidence vectors. The
// result is a convex combination, so it stays inside (0, 1) whenever the
// inputs do.
ConfidenceVector ensemble_scores(const ConfidenceVector& rho1,
                                 const ConfidenceVector& rho2,
                                 const ConfidenceVector& rho3,
                                 const EnsembleWeights& w);

// Row-by-row fusion of whole score matrices (one row per sample).
std::vector<ConfidenceVector> ensemble_scores(
    const std::vector<ConfidenceVector>& s1,
    const std::vector<ConfidenceVector>& s2,
    const std::vector<ConfidenceVector>& s3, const EnsembleWeights& w);

// Validation metric optimized by the weight search. Balanced accuracy and
// F-measure are maximized; hamming loss is minimized.
enum class SelectionMetric { balanced_accuracy, f_measure, hamming_loss };

std::string to_string(SelectionMetric metric);
SelectionMetric selection_metric_from_string(const std::string& name);

// Macro metric of the top-3 predictions obtained after fusing the three
// score matrices with `w`, evaluated against `truth`.
double evaluate_weights(const std::vector<ConfidenceVector>& s1,
                        const std::vector<ConfidenceVector>& s2,
                        const std::vector<ConfidenceVector>& s3,
                        const std::vector<MultiHotLabel>& truth,
                        const EnsembleWeights& w, SelectionMetric metric);

// Exhaustive search over the simplex lattice with spacing `step`, which must
// divide 1: every (a1, a2, a3) >= 0 with a1+a2+a3 = 1 in multiples of step is
// evaluated. Returns the best-scoring weights; ties break toward the
// lexicographically smallest (alpha1, alpha2, alpha3).
EnsembleWeights grid_search_weights(const std::vector<ConfidenceVector>& s1,
                                    const std::vector<ConfidenceVector>& s2,
                                    const std::vector<ConfidenceVector>& s3,
                                    const std::vector<MultiHotLabel>& truth,
                                    double step, SelectionMetric metric);

// Score-matrix interchange format: a header row of genre names followed by
// one row of full-precision per-genre scores per sample. Readers require the
// header to match the active vocabulary so matrices from different label
// sets cannot be fused by accident.
void write_scores_csv(std::ostream& out,
                      const std::vector<ConfidenceVector>& scores,
                      const GenreVocabulary& vocab);
std::vector<ConfidenceVector> read_scores_csv(std::istream& in,
                                              const GenreVocabulary& vocab,
                                              const std::string& origin);
std::vector<ConfidenceVector> read_scores_csv_file(const std::string& path,
                                                   const GenreVocabulary& vocab);

// Weights persist as a three-line text file, one full-precision alpha per
// line in source order.
void write_weights(std::ostream& out, const EnsembleWeights& w);
EnsembleWeights read_weights(std::istream& in, const std::string& origin);
void write_weights_file(const std::string& path, const EnsembleWeights& w);
EnsembleWeights read_weights_file(const std::string& path);

}  // namespace rdt

#endif  // RDT_ENSEMBLE_HPP_
