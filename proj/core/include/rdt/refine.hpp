#ifndef RDT_REFINE_HPP_
#define RDT_REFINE_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/model.hpp"

namespace rdt {

// Conditional genre-association probabilities estimated from training
// labels. All indices are 0-based; storage is flat row-major.
//
//   p2[j][k]       = P(genre k | genre j) = pair(j,k) / single(j)
//   p2_norm[j][k]  = p2 row-normalized over k != j (diagonal excluded)
//   p3[j][k][l]    = P(genre l | genres j,k) = triple(j,k,l) / pair(j,k)
//   p3_norm[j][k][l] = p3 normalized over l not in {j, k}
//
// The p2 diagonal is 1 by definition. Zero denominators yield 0, and rows
// whose off-diagonal mass is zero stay all-zero after normalization.
struct ConditionalTables {
  int delta = 0;
  std::vector<double> p2;       // [delta * delta]
  std::vector<double> p2_norm;  // [delta * delta]
  std::vector<double> p3;       // [delta^3]
  std::vector<double> p3_norm;  // [delta^3]

  double p2_at(int j, int k) const;
  double p2_norm_at(int j, int k) const;
  double p3_at(int j, int k, int l) const;
  double p3_norm_at(int j, int k, int l) const;
};

ConditionalTables build_conditional_tables(const CooccurrenceStats& stats);

// Association-score thresholds for adding a 2nd and 3rd genre.
struct RefineConfig {
  double tau = 0.3;
  double tau_prime = 0.03;
  void validate() const;  // both within [0, 1]
};

// Ordered genre selection for one poster: 1 to 3 class ids, dominant genre
// first, plus the association score that drove each selection step.
struct GenrePrediction {
  std::vector<int> genres;        // 1-based class ids, no duplicates
  std::vector<double> step_scores;  // aligned with genres
};

// Variable-count genre selection. The dominant genre is the confidence
// argmax (ties toward the lowest id). A 2nd genre k maximizes
// rho_k * p2_norm[j][k] over k != j and is kept only when that maximum
// strictly exceeds tau; a 3rd genre l (considered only after a 2nd) maximizes
// rho_l * p2_norm[j][l] * p3_norm[j][k][l] over l outside {j, k} and is kept
// only when strictly above tau_prime. Argmax ties always take the lowest id.
GenrePrediction refine_prediction(const ConfidenceVector& rho,
                                  const ConditionalTables& tables,
                                  const RefineConfig& cfg);

// Fraction of samples whose dominant predicted genre appears among the true
// genres.
double hit_ratio(const std::vector<GenrePrediction>& predictions,
                 const std::vector<MultiHotLabel>& truths);

// Table interchange: "<prefix>.p2.csv" and "<prefix>.p2norm.csv" hold the
// square matrices with genre-name headers and row labels; "<prefix>.p3.csv"
// and "<prefix>.p3norm.csv" hold flat j,k,l,value rows with 1-based ids.
void write_conditional_tables(const std::string& prefix,
                              const ConditionalTables& tables,
                              const GenreVocabulary& vocab);
ConditionalTables read_conditional_tables(const std::string& prefix,
                                          const GenreVocabulary& vocab);

// Stream-level helpers for the two file layouts.
void write_probability_matrix_csv(std::ostream& out,
                                  const std::vector<double>& values,
                                  const GenreVocabulary& vocab);
std::vector<double> read_probability_matrix_csv(std::istream& in,
                                                const GenreVocabulary& vocab,
                                                const std::string& origin);
void write_indexed_tensor_csv(std::ostream& out,
                              const std::vector<double>& values, int delta);
std::vector<double> read_indexed_tensor_csv(std::istream& in, int delta,
                                            const std::string& origin);

}  // namespace rdt

#endif  // RDT_REFINE_HPP_
