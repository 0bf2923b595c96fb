#ifndef RDT_METRICS_HPP_
#define RDT_METRICS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "rdt/dataset.hpp"
#include "rdt/model.hpp"

namespace rdt {

// Per-genre binary confusion counts over an evaluation set.
struct GenreConfusion {
  int delta = 0;
  std::size_t samples = 0;
  std::vector<long long> tp, fp, tn, fn;  // each of length delta
};

GenreConfusion confusion_per_genre(const std::vector<MultiHotLabel>& pred,
                                   const std::vector<MultiHotLabel>& truth);

// One metrics row. Percent-valued fields are in [0, 100]; hamming_loss is a
// fraction in [0, 1]. Ratios with zero denominators evaluate to 0.
struct MetricsRow {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
  double f_measure = 0.0;
  double hamming_loss = 0.0;
};

// Per-genre rows plus their unweighted mean. The macro row's hamming loss
// equals the usual bit-disagreement fraction over samples x genres.
struct MetricsReport {
  std::vector<MetricsRow> per_genre;
  MetricsRow macro;
  std::string partition_tag;  // optional, e.g. "TD<2>"
};

MetricsReport macro_report(const GenreConfusion& conf);

// Fraction of disagreeing label bits over samples x genres.
double hamming_loss(const std::vector<MultiHotLabel>& pred,
                    const std::vector<MultiHotLabel>& truth);

// CSV with one row per genre plus a final "macro" row; percents carry two
// decimals, hamming loss five. A non-empty partition tag is emitted as a
// leading "# partition <tag>" comment.
void write_report_csv(std::ostream& out, const MetricsReport& report,
                      const GenreVocabulary& vocab);

// Aligned plain-text rendering of the same table.
std::string format_report_table(const MetricsReport& report,
                                const GenreVocabulary& vocab);

// Per-sample listing of ground-truth bits and predicted confidence scores,
// one sample per row, scores with five decimals.
void write_heatmap_csv(std::ostream& out,
                       const std::vector<MultiHotLabel>& truth,
                       const std::vector<ConfidenceVector>& scores,
                       const GenreVocabulary& vocab);

}  // namespace rdt

#endif  // RDT_METRICS_HPP_
