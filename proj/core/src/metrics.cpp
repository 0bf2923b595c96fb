#include "rdt/metrics.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "rdt/error.hpp"

namespace rdt {

GenreConfusion confusion_per_genre(const std::vector<MultiHotLabel>& pred,
                                   const std::vector<MultiHotLabel>& truth) {
  if (pred.size() != truth.size())
    throw DomainError("confusion: " + std::to_string(pred.size()) +
                      " predictions vs " + std::to_string(truth.size()) +
                      " truths");
  if (pred.empty()) throw DomainError("confusion: empty evaluation set");
  const int delta = static_cast<int>(truth[0].bits.size());
  GenreConfusion conf;
  conf.delta = delta;
  conf.samples = pred.size();
  conf.tp.assign(static_cast<std::size_t>(delta), 0);
  conf.fp.assign(static_cast<std::size_t>(delta), 0);
  conf.tn.assign(static_cast<std::size_t>(delta), 0);
  conf.fn.assign(static_cast<std::size_t>(delta), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (static_cast<int>(pred[i].bits.size()) != delta ||
        static_cast<int>(truth[i].bits.size()) != delta)
      throw DomainError("confusion: label width mismatch at sample " +
                        std::to_string(i));
    for (int j = 0; j < delta; ++j) {
      const bool p = pred[i].bits[static_cast<std::size_t>(j)] != 0;
      const bool t = truth[i].bits[static_cast<std::size_t>(j)] != 0;
      if (p && t) ++conf.tp[static_cast<std::size_t>(j)];
      else if (p && !t) ++conf.fp[static_cast<std::size_t>(j)];
      else if (!p && t) ++conf.fn[static_cast<std::size_t>(j)];
      else ++conf.tn[static_cast<std::size_t>(j)];
    }
  }
  return conf;
}

namespace {

double ratio_or_zero(double num, double den) {
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace

MetricsReport macro_report(const GenreConfusion& conf) {
  MetricsReport report;
  report.per_genre.reserve(static_cast<std::size_t>(conf.delta));
  const double n = static_cast<double>(conf.samples);
  for (int j = 0; j < conf.delta; ++j) {
    const double tp = static_cast<double>(conf.tp[static_cast<std::size_t>(j)]);
    const double fp = static_cast<double>(conf.fp[static_cast<std::size_t>(j)]);
    const double tn = static_cast<double>(conf.tn[static_cast<std::size_t>(j)]);
    const double fn = static_cast<double>(conf.fn[static_cast<std::size_t>(j)]);
    MetricsRow row;
    row.precision = 100.0 * ratio_or_zero(tp, tp + fp);
    row.recall = 100.0 * ratio_or_zero(tp, tp + fn);
    row.specificity = 100.0 * ratio_or_zero(tn, tn + fp);
    row.balanced_accuracy = (row.recall + row.specificity) / 2.0;
    row.f_measure = ratio_or_zero(2.0 * row.precision * row.recall,
                                  row.precision + row.recall);
    row.hamming_loss = ratio_or_zero(fp + fn, n);
    report.per_genre.push_back(row);
  }
  for (const MetricsRow& row : report.per_genre) {
    report.macro.precision += row.precision;
    report.macro.recall += row.recall;
    report.macro.specificity += row.specificity;
    report.macro.balanced_accuracy += row.balanced_accuracy;
    report.macro.f_measure += row.f_measure;
    report.macro.hamming_loss += row.hamming_loss;
  }
  const double d = static_cast<double>(conf.delta);
  report.macro.precision /= d;
  report.macro.recall /= d;
  report.macro.specificity /= d;
  report.macro.balanced_accuracy /= d;
  report.macro.f_measure /= d;
  report.macro.hamming_loss /= d;
  return report;
}

double hamming_loss(const std::vector<MultiHotLabel>& pred,
                    const std::vector<MultiHotLabel>& truth) {
  if (pred.size() != truth.size())
    throw DomainError("hamming loss: length mismatch");
  if (pred.empty()) throw DomainError("hamming loss: empty input");
  long long wrong = 0;
  long long bits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].bits.size() != truth[i].bits.size())
      throw DomainError("hamming loss: label width mismatch at sample " +
                        std::to_string(i));
    for (std::size_t j = 0; j < pred[i].bits.size(); ++j) {
      wrong += (pred[i].bits[j] != truth[i].bits[j]) ? 1 : 0;
      ++bits;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(bits);
}

namespace {

std::string row_cells(const MetricsRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f,%.2f,%.5f",
                row.precision, row.recall, row.specificity,
                row.balanced_accuracy, row.f_measure, row.hamming_loss);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, const MetricsReport& report,
                      const GenreVocabulary& vocab) {
  if (static_cast<int>(report.per_genre.size()) != vocab.size())
    throw ContractError("report: genre count mismatch with vocabulary");
  if (!report.partition_tag.empty())
    out << "# partition " << report.partition_tag << '\n';
  out << "genre,precision,recall,specificity,balanced_accuracy,f_measure,"
         "hamming_loss\n";
  for (int j = 0; j < vocab.size(); ++j)
    out << vocab.label_for_id(j + 1) << ','
        << row_cells(report.per_genre[static_cast<std::size_t>(j)]) << '\n';
  out << "macro," << row_cells(report.macro) << '\n';
}

std::string format_report_table(const MetricsReport& report,
                                const GenreVocabulary& vocab) {
  if (static_cast<int>(report.per_genre.size()) != vocab.size())
    throw ContractError("report: genre count mismatch with vocabulary");
  std::size_t name_width = 5;  // "macro"
  for (const std::string& name : vocab.labels())
    name_width = std::max(name_width, name.size());
  std::ostringstream out;
  if (!report.partition_tag.empty())
    out << "partition " << report.partition_tag << '\n';
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s %9s %9s\n",
                static_cast<int>(name_width), "genre", "prec", "recall",
                "spec", "bal-acc", "f-meas", "ham-loss");
  out << buf;
  auto emit = [&](const std::string& name, const MetricsRow& row) {
    std::snprintf(buf, sizeof buf,
                  "%-*s %9.2f %9.2f %9.2f %9.2f %9.2f %9.5f\n",
                  static_cast<int>(name_width), name.c_str(), row.precision,
                  row.recall, row.specificity, row.balanced_accuracy,
                  row.f_measure, row.hamming_loss);
    out << buf;
  };
  for (int j = 0; j < vocab.size(); ++j)
    emit(vocab.label_for_id(j + 1),
         report.per_genre[static_cast<std::size_t>(j)]);
  emit("macro", report.macro);
  return out.str();
}

void write_heatmap_csv(std::ostream& out,
                       const std::vector<MultiHotLabel>& truth,
                       const std::vector<ConfidenceVector>& scores,
                       const GenreVocabulary& vocab) {
  if (truth.size() != scores.size())
    throw DomainError("heatmap: " + std::to_string(truth.size()) +
                      " truths vs " + std::to_string(scores.size()) +
                      " score rows");
  out << "sample";
  for (const std::string& name : vocab.labels()) out << ',' << name << "_truth";
  for (const std::string& name : vocab.labels()) out << ',' << name << "_score";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (static_cast<int>(truth[i].bits.size()) != vocab.size() ||
        static_cast<int>(scores[i].scores.size()) != vocab.size())
      throw DomainError("heatmap: width mismatch at sample " +
                        std::to_string(i + 1));
    out << (i + 1);
    for (std::uint8_t b : truth[i].bits) out << ',' << (b ? 1 : 0);
    for (double s : scores[i].scores) {
      std::snprintf(buf, sizeof buf, ",%.5f", s);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace rdt
