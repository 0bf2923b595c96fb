#include "rdt/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rdt/error.hpp"
#include "rdt/rng.hpp"

namespace rdt {

namespace {

std::string loc(const std::string& origin, std::size_t line) {
  return origin + ":" + std::to_string(line) + ": ";
}

int parse_class_id(const std::string& token, const std::string& where) {
  if (token.empty()) throw ParseError(where + "empty genre id");
  for (char c : token)
    if (c < '0' || c > '9')
      throw ParseError(where + "malformed genre id '" + token + "'");
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw ParseError(where + "malformed genre id '" + token + "'");
  }
}

}  // namespace

GenreVocabulary::GenreVocabulary(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() < 2)
    throw DomainError("vocabulary needs at least 2 genres, got " +
                      std::to_string(labels_.size()));
  std::unordered_set<std::string> seen;
  for (const std::string& name : labels_) {
    if (name.empty()) throw DomainError("vocabulary contains an empty name");
    if (!seen.insert(name).second)
      throw DomainError("vocabulary contains duplicate name '" + name + "'");
  }
}

GenreVocabulary GenreVocabulary::imdb13() {
  return GenreVocabulary({"Action", "Adventure", "Animation", "Biography",
                          "Comedy", "Crime", "Drama", "Fantasy", "Horror",
                          "Mystery", "Romance", "Sci-Fi", "Thriller"});
}

const std::string& GenreVocabulary::label_for_id(int class_id) const {
  if (class_id < 1 || class_id > size())
    throw DomainError("class id " + std::to_string(class_id) +
                      " outside 1.." + std::to_string(size()));
  return labels_[static_cast<std::size_t>(class_id - 1)];
}

int GenreVocabulary::id_for_label(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (labels_[static_cast<std::size_t>(i)] == name) return i + 1;
  return 0;
}

int MultiHotLabel::count() const {
  int k = 0;
  for (std::uint8_t b : bits) k += b;
  return k;
}

bool MultiHotLabel::test_id(int class_id) const {
  if (class_id < 1 || class_id > static_cast<int>(bits.size()))
    throw DomainError("class id " + std::to_string(class_id) +
                      " outside 1.." + std::to_string(bits.size()));
  return bits[static_cast<std::size_t>(class_id - 1)] != 0;
}

std::vector<int> MultiHotLabel::ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(static_cast<int>(i) + 1);
  return out;
}

MultiHotLabel MultiHotLabel::from_ids(const std::vector<int>& class_ids,
                                      int delta) {
  MultiHotLabel label;
  label.bits.assign(static_cast<std::size_t>(delta), 0);
  for (int id : class_ids) {
    if (id < 1 || id > delta)
      throw DomainError("class id " + std::to_string(id) + " outside 1.." +
                        std::to_string(delta));
    label.bits[static_cast<std::size_t>(id - 1)] = 1;
  }
  if (label.count() == 0) throw DomainError("label has no genres");
  return label;
}

PosterManifest parse_manifest(std::istream& in, const GenreVocabulary& vocab,
                              const std::string& origin) {
  PosterManifest manifest;
  std::unordered_set<std::string> seen_paths;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty())
      throw ParseError(loc(origin, lineno) + "blank line in manifest");

    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() != 3)
      throw ParseError(loc(origin, lineno) + "expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    const std::string& path = fields[0];
    const std::string& movie_id = fields[1];
    const std::string& genres = fields[2];
    if (path.empty()) throw ParseError(loc(origin, lineno) + "empty poster path");
    if (movie_id.empty()) throw ParseError(loc(origin, lineno) + "empty movie id");
    if (!seen_paths.insert(path).second)
      throw ParseError(loc(origin, lineno) + "duplicate poster path '" + path + "'");

    std::vector<int> ids;
    std::size_t gpos = 0;
    while (gpos <= genres.size()) {
      std::size_t semi = genres.find(';', gpos);
      if (semi == std::string::npos) semi = genres.size();
      const int id = parse_class_id(genres.substr(gpos, semi - gpos),
                                    loc(origin, lineno));
      if (id < 1 || id > vocab.size())
        throw ParseError(loc(origin, lineno) + "unknown genre id " +
                         std::to_string(id));
      if (std::find(ids.begin(), ids.end(), id) != ids.end())
        throw ParseError(loc(origin, lineno) + "duplicate genre id " +
                         std::to_string(id));
      ids.push_back(id);
      gpos = semi + 1;
      if (semi == genres.size()) break;
    }
    if (ids.empty())
      throw ParseError(loc(origin, lineno) + "record has no genres");

    manifest.records.push_back(
        {path, movie_id, MultiHotLabel::from_ids(ids, vocab.size())});
  }
  if (manifest.records.empty()) throw ParseError(origin + ": empty manifest");
  return manifest;
}

PosterManifest load_manifest(const std::string& path,
                             const GenreVocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path);
  return parse_manifest(in, vocab, path);
}

namespace {

// Largest-remainder apportionment of n into parts proportional to ratios.
// Remainder ties break toward the earlier part.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<int>& ratios) {
  int total = 0;
  for (int r : ratios) {
    if (r < 0) throw DomainError("negative split ratio");
    total += r;
  }
  if (total <= 0) throw DomainError("split ratios sum to zero");
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> remainders(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double quota = static_cast<double>(n) * ratios[i] / total;
    sizes[i] = static_cast<std::size_t>(quota);
    remainders[i] = quota - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::size_t leftover = n - assigned;
  std::vector<std::size_t> order(ratios.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&remainders](std::size_t a, std::size_t b) {
                     return remainders[a] > remainders[b];
                   });
  for (std::size_t i = 0; i < leftover; ++i) ++sizes[order[i % order.size()]];
  return sizes;
}

}  // namespace

SplitAssignment split_dataset(const PosterManifest& m, SplitRatios ratios,
                              std::uint64_t seed) {
  const std::size_t n = m.size();
  if (n < 10)
    throw DomainError("split needs at least 10 records, got " +
                      std::to_string(n));
  const int delta = static_cast<int>(m.records[0].label.bits.size());
  const std::vector<std::size_t> targets =
      apportion(n, {ratios.train, ratios.val, ratios.test});

  std::vector<std::size_t> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = i;
  Rng rng(seed);
  rng.shuffle(shuffled);

  // Genres ordered rarest-first (ties by lower index) drive the seating pass.
  std::vector<long long> positives(static_cast<std::size_t>(delta), 0);
  for (const PosterRecord& r : m.records)
    for (int g = 0; g < delta; ++g)
      positives[static_cast<std::size_t>(g)] += r.label.bits[static_cast<std::size_t>(g)];
  std::vector<int> genre_order(static_cast<std::size_t>(delta));
  for (int g = 0; g < delta; ++g) genre_order[static_cast<std::size_t>(g)] = g;
  std::stable_sort(genre_order.begin(), genre_order.end(),
                   [&positives](int a, int b) {
                     return positives[static_cast<std::size_t>(a)] <
                            positives[static_cast<std::size_t>(b)];
                   });

  std::vector<int> assignment(n, -1);  // -1 unassigned, else split index
  std::vector<std::size_t> filled(3, 0);
  for (int g : genre_order) {
    if (positives[static_cast<std::size_t>(g)] == 0) continue;
    for (int s = 0; s < 3; ++s) {
      if (filled[static_cast<std::size_t>(s)] >= targets[static_cast<std::size_t>(s)])
        continue;
      bool present = false;
      for (std::size_t i = 0; i < n && !present; ++i)
        present = assignment[i] == s &&
                  m.records[i].label.bits[static_cast<std::size_t>(g)] != 0;
      if (present) continue;
      for (std::size_t idx : shuffled) {
        if (assignment[idx] != -1) continue;
        if (m.records[idx].label.bits[static_cast<std::size_t>(g)] == 0) continue;
        assignment[idx] = s;
        ++filled[static_cast<std::size_t>(s)];
        break;
      }
    }
  }

  // Fill the remainder in shuffled order: train, then val, then test.
  for (std::size_t idx : shuffled) {
    if (assignment[idx] != -1) continue;
    for (int s = 0; s < 3; ++s) {
      if (filled[static_cast<std::size_t>(s)] < targets[static_cast<std::size_t>(s)]) {
        assignment[idx] = s;
        ++filled[static_cast<std::size_t>(s)];
        break;
      }
    }
  }

  SplitAssignment split;
  split.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    switch (assignment[i]) {
      case 0: split.train.push_back(i); break;
      case 1: split.val.push_back(i); break;
      case 2: split.test.push_back(i); break;
      default:
        throw ContractError("split left a record unassigned");
    }
  }
  return split;
}

long long CooccurrenceStats::pair_at(int j, int k) const {
  return pair[static_cast<std::size_t>(j) * delta + k];
}

long long CooccurrenceStats::triple_at(int j, int k, int l) const {
  return triple[(static_cast<std::size_t>(j) * delta + k) * delta + l];
}

CooccurrenceStats compute_cooccurrence(const PosterManifest& m,
                                       const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw DomainError("co-occurrence subset is empty");
  const int delta = static_cast<int>(m.records[0].label.bits.size());
  CooccurrenceStats stats;
  stats.delta = delta;
  stats.subset_size = subset.size();
  stats.single.assign(static_cast<std::size_t>(delta), 0);
  stats.pair.assign(static_cast<std::size_t>(delta) * delta, 0);
  stats.triple.assign(static_cast<std::size_t>(delta) * delta * delta, 0);

  for (std::size_t idx : subset) {
    if (idx >= m.size())
      throw DomainError("subset index " + std::to_string(idx) +
                        " outside manifest of size " + std::to_string(m.size()));
    const std::vector<int> pos = m.records[idx].label.ids();
    for (int a : pos) {
      const int j = a - 1;
      ++stats.single[static_cast<std::size_t>(j)];
      for (int b : pos) {
        const int k = b - 1;
        ++stats.pair[static_cast<std::size_t>(j) * delta + k];
        for (int c : pos) {
          const int l = c - 1;
          ++stats.triple[(static_cast<std::size_t>(j) * delta + k) * delta + l];
        }
      }
    }
  }

  stats.imbalance.assign(static_cast<std::size_t>(delta), 0.0);
  for (int j = 0; j < delta; ++j) {
    const long long pos = stats.single[static_cast<std::size_t>(j)];
    const long long neg = static_cast<long long>(subset.size()) - pos;
    stats.imbalance[static_cast<std::size_t>(j)] =
        neg == 0 ? std::numeric_limits<double>::infinity()
                 : static_cast<double>(pos) / static_cast<double>(neg);
  }
  return stats;
}

void write_cooccurrence_csv(std::ostream& out, const CooccurrenceStats& stats,
                            const GenreVocabulary& vocab) {
  if (vocab.size() != stats.delta)
    throw ContractError("vocabulary size " + std::to_string(vocab.size()) +
                        " does not match stats delta " +
                        std::to_string(stats.delta));
  out << "genre";
  for (const std::string& name : vocab.labels()) out << ',' << name;
  out << '\n';
  for (int j = 0; j < stats.delta; ++j) {
    out << vocab.label_for_id(j + 1);
    for (int k = 0; k < stats.delta; ++k) out << ',' << stats.pair_at(j, k);
    out << '\n';
  }
  out << "single";
  for (int j = 0; j < stats.delta; ++j)
    out << ',' << stats.single[static_cast<std::size_t>(j)];
  out << '\n';
  out << "imbalance";
  std::ostringstream fmt;
  fmt.setf(std::ios::fixed);
  fmt.precision(5);
  for (int j = 0; j < stats.delta; ++j) {
    fmt.str("");
    fmt << stats.imbalance[static_cast<std::size_t>(j)];
    out << ',' << fmt.str();
  }
  out << '\n';
}

}  // namespace rdt
