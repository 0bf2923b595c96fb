#include "rdt/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rdt/error.hpp"
#include "rdt/metrics.hpp"
#include "rdt/train.hpp"

namespace rdt {

void EnsembleWeights::validate() const {
  double sum = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0 && a <= 1.0))
      throw DomainError("ensemble weight " + std::to_string(a) +
                        " outside [0, 1]");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DomainError("ensemble weights sum to " + std::to_string(sum) +
                      ", expected 1");
}

ConfidenceVector ensemble_scores(const ConfidenceVector& rho1,
                                 const ConfidenceVector& rho2,
                                 const ConfidenceVector& rho3,
                                 const EnsembleWeights& w) {
  w.validate();
  const std::size_t n = rho1.scores.size();
  if (rho2.scores.size() != n || rho3.scores.size() != n)
    throw ShapeError("fusion: score vectors of lengths " + std::to_string(n) +
                     ", " + std::to_string(rho2.scores.size()) + ", " +
                     std::to_string(rho3.scores.size()));
  ConfidenceVector out;
  out.scores.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    out.scores[j] = w.alpha[0] * rho1.scores[j] + w.alpha[1] * rho2.scores[j] +
                    w.alpha[2] * rho3.scores[j];
  return out;
}

std::vector<ConfidenceVector> ensemble_scores(
    const std::vector<ConfidenceVector>& s1,
    const std::vector<ConfidenceVector>& s2,
    const std::vector<ConfidenceVector>& s3, const EnsembleWeights& w) {
  if (s1.size() != s2.size() || s1.size() != s3.size())
    throw ShapeError("fusion: score matrices with " + std::to_string(s1.size()) +
                     ", " + std::to_string(s2.size()) + ", " +
                     std::to_string(s3.size()) + " rows");
  std::vector<ConfidenceVector> out;
  out.reserve(s1.size());
  for (std::size_t i = 0; i < s1.size(); ++i)
    out.push_back(ensemble_scores(s1[i], s2[i], s3[i], w));
  return out;
}

std::string to_string(SelectionMetric metric) {
  switch (metric) {
    case SelectionMetric::balanced_accuracy: return "ba";
    case SelectionMetric::f_measure: return "fm";
    case SelectionMetric::hamming_loss: return "hl";
  }
  throw ContractError("unknown selection metric value");
}

SelectionMetric selection_metric_from_string(const std::string& name) {
  if (name == "ba") return SelectionMetric::balanced_accuracy;
  if (name == "fm") return SelectionMetric::f_measure;
  if (name == "hl") return SelectionMetric::hamming_loss;
  throw ParseError("unknown selection metric '" + name +
                   "' (expected ba, fm, or hl)");
}

double evaluate_weights(const std::vector<ConfidenceVector>& s1,
                        const std::vector<ConfidenceVector>& s2,
                        const std::vector<ConfidenceVector>& s3,
                        const std::vector<MultiHotLabel>& truth,
                        const EnsembleWeights& w, SelectionMetric metric) {
  if (truth.size() != s1.size())
    throw ShapeError("fusion: " + std::to_string(s1.size()) +
                     " score rows vs " + std::to_string(truth.size()) +
                     " labels");
  const std::vector<ConfidenceVector> fused = ensemble_scores(s1, s2, s3, w);
  std::vector<MultiHotLabel> pred;
  pred.reserve(fused.size());
  for (const ConfidenceVector& rho : fused) pred.push_back(top3_predict(rho));
  const MetricsReport report = macro_report(confusion_per_genre(pred, truth));
  switch (metric) {
    case SelectionMetric::balanced_accuracy:
      return report.macro.balanced_accuracy;
    case SelectionMetric::f_measure: return report.macro.f_measure;
    case SelectionMetric::hamming_loss: return report.macro.hamming_loss;
  }
  throw ContractError("unknown selection metric value");
}

EnsembleWeights grid_search_weights(const std::vector<ConfidenceVector>& s1,
                                    const std::vector<ConfidenceVector>& s2,
                                    const std::vector<ConfidenceVector>& s3,
                                    const std::vector<MultiHotLabel>& truth,
                                    double step, SelectionMetric metric) {
  if (truth.empty()) throw DomainError("weight search: empty validation set");
  if (!(step > 0.0 && step <= 1.0))
    throw DomainError("weight search: step " + std::to_string(step) +
                      " outside (0, 1]");
  const long long divisions = std::llround(1.0 / step);
  if (divisions < 1 || std::abs(static_cast<double>(divisions) * step - 1.0) > 1e-9)
    throw DomainError("weight search: step " + std::to_string(step) +
                      " does not divide 1");
  const double unit = 1.0 / static_cast<double>(divisions);
  const bool minimize = metric == SelectionMetric::hamming_loss;
  bool have_best = false;
  double best_value = 0.0;
  EnsembleWeights best;
  for (long long a = 0; a <= divisions; ++a) {
    for (long long b = 0; b <= divisions - a; ++b) {
      const long long c = divisions - a - b;
      EnsembleWeights w;
      w.alpha = {static_cast<double>(a) * unit, static_cast<double>(b) * unit,
                 static_cast<double>(c) * unit};
      // Pin the last coordinate so the three weights sum to 1 exactly; when
      // rounding pushes a1 + a2 a hair past 1 the residual clamps to the
      // simplex edge instead of going negative.
      w.alpha[2] = c == 0 ? 0.0 : std::max(0.0, 1.0 - w.alpha[0] - w.alpha[1]);
      const double value = evaluate_weights(s1, s2, s3, truth, w, metric);
      const bool better =
          !have_best || (minimize ? value < best_value : value > best_value);
      if (better) {
        have_best = true;
        best_value = value;
        best = w;
      }
    }
  }
  return best;
}

void write_scores_csv(std::ostream& out,
                      const std::vector<ConfidenceVector>& scores,
                      const GenreVocabulary& vocab) {
  bool first = true;
  for (const std::string& name : vocab.labels()) {
    if (!first) out << ',';
    out << name;
    first = false;
  }
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(scores[i].scores.size()) != vocab.size())
      throw ShapeError("scores row " + std::to_string(i + 1) + " has " +
                       std::to_string(scores[i].scores.size()) +
                       " entries, expected " + std::to_string(vocab.size()));
    for (std::size_t j = 0; j < scores[i].scores.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", scores[i].scores[j]);
      out << (j == 0 ? "" : ",") << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

double parse_score(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": unreadable score '" + text + "'");
  }
  if (used != text.size())
    throw ParseError(where + ": trailing characters in score '" + text + "'");
  if (!std::isfinite(value) || value < 0.0 || value > 1.0)
    throw ParseError(where + ": score " + text + " outside [0, 1]");
  return value;
}

}  // namespace

std::vector<ConfidenceVector> read_scores_csv(std::istream& in,
                                              const GenreVocabulary& vocab,
                                              const std::string& origin) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(origin + ":1: missing score header");
  const std::vector<std::string> header = split_csv_line(line);
  if (static_cast<int>(header.size()) != vocab.size())
    throw ParseError(origin + ":1: header has " +
                     std::to_string(header.size()) + " columns, expected " +
                     std::to_string(vocab.size()));
  for (int j = 0; j < vocab.size(); ++j)
    if (header[static_cast<std::size_t>(j)] != vocab.label_for_id(j + 1))
      throw ParseError(origin + ":1: header column " + std::to_string(j + 1) +
                       " is '" + header[static_cast<std::size_t>(j)] +
                       "', expected '" + vocab.label_for_id(j + 1) + "'");
  std::vector<ConfidenceVector> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != vocab.size())
      throw ParseError(where + ": row has " + std::to_string(fields.size()) +
                       " columns, expected " + std::to_string(vocab.size()));
    ConfidenceVector rho;
    rho.scores.reserve(fields.size());
    for (const std::string& f : fields) rho.scores.push_back(parse_score(f, where));
    rows.push_back(std::move(rho));
  }
  if (rows.empty()) throw ParseError(origin + ": no score rows");
  return rows;
}

std::vector<ConfidenceVector> read_scores_csv_file(const std::string& path,
                                                   const GenreVocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scores file: " + path);
  return read_scores_csv(in, vocab, path);
}

void write_weights(std::ostream& out, const EnsembleWeights& w) {
  w.validate();
  char buf[40];
  for (double a : w.alpha) {
    std::snprintf(buf, sizeof buf, "%.17g", a);
    out << buf << '\n';
  }
}

EnsembleWeights read_weights(std::istream& in, const std::string& origin) {
  EnsembleWeights w;
  std::string line;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, line))
      throw ParseError(origin + ": expected 3 weight lines, got " +
                       std::to_string(i));
    const std::string where = origin + ":" + std::to_string(i + 1);
    std::size_t used = 0;
    try {
      w.alpha[static_cast<std::size_t>(i)] = std::stod(line, &used);
    } catch (const std::exception&) {
      throw ParseError(where + ": unreadable weight '" + line + "'");
    }
    if (used != line.size())
      throw ParseError(where + ": trailing characters in weight '" + line + "'");
  }
  if (std::getline(in, line) && !line.empty())
    throw ParseError(origin + ":4: unexpected extra content");
  try {
    w.validate();
  } catch (const DomainError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return w;
}

void write_weights_file(const std::string& path, const EnsembleWeights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open weights file for writing: " + path);
  write_weights(out, w);
  out.flush();
  if (!out) throw IoError("failed writing weights file: " + path);
}

EnsembleWeights read_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file: " + path);
  return read_weights(in, path);
}

}  // namespace rdt
