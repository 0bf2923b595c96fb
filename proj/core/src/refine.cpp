#include "rdt/refine.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "rdt/error.hpp"

namespace rdt {

namespace {

void check_index(int i, int delta, const char* what) {
  if (i < 0 || i >= delta)
    throw ContractError(std::string(what) + " index " + std::to_string(i) +
                        " outside [0, " + std::to_string(delta) + ")");
}

}  // namespace

double ConditionalTables::p2_at(int j, int k) const {
  check_index(j, delta, "table");
  check_index(k, delta, "table");
  return p2[static_cast<std::size_t>(j) * static_cast<std::size_t>(delta) +
            static_cast<std::size_t>(k)];
}

double ConditionalTables::p2_norm_at(int j, int k) const {
  check_index(j, delta, "table");
  check_index(k, delta, "table");
  return p2_norm[static_cast<std::size_t>(j) * static_cast<std::size_t>(delta) +
                 static_cast<std::size_t>(k)];
}

double ConditionalTables::p3_at(int j, int k, int l) const {
  check_index(j, delta, "table");
  check_index(k, delta, "table");
  check_index(l, delta, "table");
  const std::size_t d = static_cast<std::size_t>(delta);
  return p3[(static_cast<std::size_t>(j) * d + static_cast<std::size_t>(k)) * d +
            static_cast<std::size_t>(l)];
}

double ConditionalTables::p3_norm_at(int j, int k, int l) const {
  check_index(j, delta, "table");
  check_index(k, delta, "table");
  check_index(l, delta, "table");
  const std::size_t d = static_cast<std::size_t>(delta);
  return p3_norm[(static_cast<std::size_t>(j) * d + static_cast<std::size_t>(k)) * d +
                 static_cast<std::size_t>(l)];
}

ConditionalTables build_conditional_tables(const CooccurrenceStats& stats) {
  if (stats.delta <= 0 || stats.subset_size == 0)
    throw DomainError("conditional tables require counts from a non-empty "
                      "record subset");
  const int delta = stats.delta;
  const std::size_t d = static_cast<std::size_t>(delta);
  ConditionalTables t;
  t.delta = delta;
  t.p2.assign(d * d, 0.0);
  t.p2_norm.assign(d * d, 0.0);
  t.p3.assign(d * d * d, 0.0);
  t.p3_norm.assign(d * d * d, 0.0);

  for (int j = 0; j < delta; ++j) {
    const long long nj = stats.single[static_cast<std::size_t>(j)];
    for (int k = 0; k < delta; ++k) {
      double value;
      if (j == k)
        value = 1.0;
      else if (nj == 0)
        value = 0.0;
      else
        value = static_cast<double>(stats.pair_at(j, k)) /
                static_cast<double>(nj);
      t.p2[static_cast<std::size_t>(j) * d + static_cast<std::size_t>(k)] = value;
    }
    double row_sum = 0.0;
    for (int k = 0; k < delta; ++k)
      if (k != j) row_sum += t.p2[static_cast<std::size_t>(j) * d +
                                  static_cast<std::size_t>(k)];
    if (row_sum > 0.0)
      for (int k = 0; k < delta; ++k)
        if (k != j)
          t.p2_norm[static_cast<std::size_t>(j) * d +
                    static_cast<std::size_t>(k)] =
              t.p2[static_cast<std::size_t>(j) * d +
                   static_cast<std::size_t>(k)] /
              row_sum;
  }

  for (int j = 0; j < delta; ++j) {
    for (int k = 0; k < delta; ++k) {
      const long long njk = stats.pair_at(j, k);
      const std::size_t base =
          (static_cast<std::size_t>(j) * d + static_cast<std::size_t>(k)) * d;
      if (njk > 0)
        for (int l = 0; l < delta; ++l)
          t.p3[base + static_cast<std::size_t>(l)] =
              static_cast<double>(stats.triple_at(j, k, l)) /
              static_cast<double>(njk);
      double sum = 0.0;
      for (int l = 0; l < delta; ++l)
        if (l != j && l != k) sum += t.p3[base + static_cast<std::size_t>(l)];
      if (sum > 0.0)
        for (int l = 0; l < delta; ++l)
          if (l != j && l != k)
            t.p3_norm[base + static_cast<std::size_t>(l)] =
                t.p3[base + static_cast<std::size_t>(l)] / sum;
    }
  }
  return t;
}

void RefineConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw DomainError("tau " + std::to_string(tau) + " outside [0, 1]");
  if (!(tau_prime >= 0.0 && tau_prime <= 1.0))
    throw DomainError("tau_prime " + std::to_string(tau_prime) +
                      " outside [0, 1]");
}

GenrePrediction refine_prediction(const ConfidenceVector& rho,
                                  const ConditionalTables& tables,
                                  const RefineConfig& cfg) {
  cfg.validate();
  const int delta = tables.delta;
  if (delta <= 0) throw ContractError("refine: empty conditional tables");
  if (static_cast<int>(rho.scores.size()) != delta)
    throw ShapeError("refine: " + std::to_string(rho.scores.size()) +
                     " scores vs " + std::to_string(delta) + " table genres");

  GenrePrediction out;
  int j = 0;
  for (int i = 1; i < delta; ++i)
    if (rho.scores[static_cast<std::size_t>(i)] >
        rho.scores[static_cast<std::size_t>(j)])
      j = i;
  out.genres.push_back(j + 1);
  out.step_scores.push_back(rho.scores[static_cast<std::size_t>(j)]);

  int k = -1;
  double second_best = 0.0;
  for (int cand = 0; cand < delta; ++cand) {
    if (cand == j) continue;
    const double score =
        rho.scores[static_cast<std::size_t>(cand)] * tables.p2_norm_at(j, cand);
    if (k < 0 || score > second_best) {
      k = cand;
      second_best = score;
    }
  }
  if (k < 0 || !(second_best > cfg.tau)) return out;
  out.genres.push_back(k + 1);
  out.step_scores.push_back(second_best);

  int l = -1;
  double third_best = 0.0;
  for (int cand = 0; cand < delta; ++cand) {
    if (cand == j || cand == k) continue;
    const double score = rho.scores[static_cast<std::size_t>(cand)] *
                         tables.p2_norm_at(j, cand) *
                         tables.p3_norm_at(j, k, cand);
    if (l < 0 || score > third_best) {
      l = cand;
      third_best = score;
    }
  }
  if (l < 0 || !(third_best > cfg.tau_prime)) return out;
  out.genres.push_back(l + 1);
  out.step_scores.push_back(third_best);
  return out;
}

double hit_ratio(const std::vector<GenrePrediction>& predictions,
                 const std::vector<MultiHotLabel>& truths) {
  if (predictions.size() != truths.size())
    throw DomainError("hit ratio: " + std::to_string(predictions.size()) +
                      " predictions vs " + std::to_string(truths.size()) +
                      " truths");
  if (predictions.empty()) throw DomainError("hit ratio: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].genres.empty())
      throw ContractError("hit ratio: prediction " + std::to_string(i) +
                          " has no genres");
    if (truths[i].test_id(predictions[i].genres.front())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

void write_probability_matrix_csv(std::ostream& out,
                                  const std::vector<double>& values,
                                  const GenreVocabulary& vocab) {
  const std::size_t d = static_cast<std::size_t>(vocab.size());
  if (values.size() != d * d)
    throw ShapeError("matrix export: " + std::to_string(values.size()) +
                     " values for " + std::to_string(d) + " genres");
  out << "genre";
  for (const std::string& name : vocab.labels()) out << ',' << name;
  out << '\n';
  char buf[40];
  for (std::size_t j = 0; j < d; ++j) {
    out << vocab.label_for_id(static_cast<int>(j) + 1);
    for (std::size_t k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", values[j * d + k]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
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

double parse_probability(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": unreadable value '" + text + "'");
  }
  if (used != text.size())
    throw ParseError(where + ": trailing characters in value '" + text + "'");
  if (!std::isfinite(value) || value < 0.0 || value > 1.0)
    throw ParseError(where + ": probability " + text + " outside [0, 1]");
  return value;
}

long long parse_id(const std::string& text, int delta, const std::string& where) {
  if (text.empty()) throw ParseError(where + ": empty genre id");
  for (char c : text)
    if (c < '0' || c > '9')
      throw ParseError(where + ": genre id '" + text + "' is not a number");
  long long value = 0;
  try {
    value = std::stoll(text);
  } catch (const std::exception&) {
    throw ParseError(where + ": genre id '" + text + "' out of range");
  }
  if (value < 1 || value > delta)
    throw ParseError(where + ": genre id " + text + " outside [1, " +
                     std::to_string(delta) + "]");
  return value;
}

}  // namespace

std::vector<double> read_probability_matrix_csv(std::istream& in,
                                                const GenreVocabulary& vocab,
                                                const std::string& origin) {
  const std::size_t d = static_cast<std::size_t>(vocab.size());
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(origin + ":1: missing matrix header");
  std::vector<std::string> header = split_fields(line);
  if (header.size() != d + 1 || header[0] != "genre")
    throw ParseError(origin + ":1: expected header 'genre,<names>'");
  for (std::size_t k = 0; k < d; ++k)
    if (header[k + 1] != vocab.label_for_id(static_cast<int>(k) + 1))
      throw ParseError(origin + ":1: header column " + std::to_string(k + 2) +
                       " is '" + header[k + 1] + "', expected '" +
                       vocab.label_for_id(static_cast<int>(k) + 1) + "'");
  std::vector<double> values(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const std::string where = origin + ":" + std::to_string(j + 2);
    if (!std::getline(in, line)) throw ParseError(where + ": missing matrix row");
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != d + 1)
      throw ParseError(where + ": row has " + std::to_string(fields.size()) +
                       " columns, expected " + std::to_string(d + 1));
    if (fields[0] != vocab.label_for_id(static_cast<int>(j) + 1))
      throw ParseError(where + ": row label '" + fields[0] + "', expected '" +
                       vocab.label_for_id(static_cast<int>(j) + 1) + "'");
    for (std::size_t k = 0; k < d; ++k)
      values[j * d + k] = parse_probability(fields[k + 1], where);
  }
  if (std::getline(in, line) && !line.empty())
    throw ParseError(origin + ": unexpected content after matrix rows");
  return values;
}

void write_indexed_tensor_csv(std::ostream& out,
                              const std::vector<double>& values, int delta) {
  const std::size_t d = static_cast<std::size_t>(delta);
  if (delta <= 0 || values.size() != d * d * d)
    throw ShapeError("tensor export: " + std::to_string(values.size()) +
                     " values for " + std::to_string(delta) + " genres");
  out << "j,k,l,value\n";
  char buf[40];
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < d; ++l) {
        std::snprintf(buf, sizeof buf, "%.17g",
                      values[(j * d + k) * d + l]);
        out << (j + 1) << ',' << (k + 1) << ',' << (l + 1) << ',' << buf
            << '\n';
      }
}

std::vector<double> read_indexed_tensor_csv(std::istream& in, int delta,
                                            const std::string& origin) {
  if (delta <= 0) throw ContractError("tensor import: genre count must be positive");
  const std::size_t d = static_cast<std::size_t>(delta);
  std::string line;
  if (!std::getline(in, line) || line != "j,k,l,value")
    throw ParseError(origin + ":1: expected header 'j,k,l,value'");
  std::vector<double> values(d * d * d, 0.0);
  std::vector<bool> seen(d * d * d, false);
  std::size_t line_no = 1;
  std::size_t filled = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != 4)
      throw ParseError(where + ": expected j,k,l,value");
    const std::size_t j = static_cast<std::size_t>(parse_id(fields[0], delta, where)) - 1;
    const std::size_t k = static_cast<std::size_t>(parse_id(fields[1], delta, where)) - 1;
    const std::size_t l = static_cast<std::size_t>(parse_id(fields[2], delta, where)) - 1;
    const std::size_t idx = (j * d + k) * d + l;
    if (seen[idx])
      throw ParseError(where + ": duplicate entry for (" + fields[0] + "," +
                       fields[1] + "," + fields[2] + ")");
    seen[idx] = true;
    values[idx] = parse_probability(fields[3], where);
    ++filled;
  }
  if (filled != d * d * d)
    throw ParseError(origin + ": " + std::to_string(filled) +
                     " entries, expected " + std::to_string(d * d * d));
  return values;
}

namespace {

void write_table_file(const std::string& path,
                      const std::function<void(std::ostream&)>& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open table file for writing: " + path);
  writer(out);
  out.flush();
  if (!out) throw IoError("failed writing table file: " + path);
}

}  // namespace

void write_conditional_tables(const std::string& prefix,
                              const ConditionalTables& tables,
                              const GenreVocabulary& vocab) {
  if (tables.delta != vocab.size())
    throw ShapeError("table export: " + std::to_string(tables.delta) +
                     " table genres vs " + std::to_string(vocab.size()) +
                     " vocabulary entries");
  write_table_file(prefix + ".p2.csv", [&](std::ostream& out) {
    write_probability_matrix_csv(out, tables.p2, vocab);
  });
  write_table_file(prefix + ".p2norm.csv", [&](std::ostream& out) {
    write_probability_matrix_csv(out, tables.p2_norm, vocab);
  });
  write_table_file(prefix + ".p3.csv", [&](std::ostream& out) {
    write_indexed_tensor_csv(out, tables.p3, tables.delta);
  });
  write_table_file(prefix + ".p3norm.csv", [&](std::ostream& out) {
    write_indexed_tensor_csv(out, tables.p3_norm, tables.delta);
  });
}

ConditionalTables read_conditional_tables(const std::string& prefix,
                                          const GenreVocabulary& vocab) {
  auto open = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open table file: " + path);
    return in;
  };
  ConditionalTables t;
  t.delta = vocab.size();
  {
    std::ifstream in = open(prefix + ".p2.csv");
    t.p2 = read_probability_matrix_csv(in, vocab, prefix + ".p2.csv");
  }
  {
    std::ifstream in = open(prefix + ".p2norm.csv");
    t.p2_norm = read_probability_matrix_csv(in, vocab, prefix + ".p2norm.csv");
  }
  {
    std::ifstream in = open(prefix + ".p3.csv");
    t.p3 = read_indexed_tensor_csv(in, t.delta, prefix + ".p3.csv");
  }
  {
    std::ifstream in = open(prefix + ".p3norm.csv");
    t.p3_norm = read_indexed_tensor_csv(in, t.delta, prefix + ".p3norm.csv");
  }
  return t;
}

}  // namespace rdt
