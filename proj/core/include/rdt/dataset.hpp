#ifndef RDT_DATASET_HPP_
#define RDT_DATASET_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rdt {

// Ordered genre label set. Class ids are 1-based in files and CLI output;
// in-memory indices are 0-based throughout.
class GenreVocabulary {
 public:
  explicit GenreVocabulary(std::vector<std::string> labels);
  // The 13-genre movie vocabulary this project targets by default.
  static GenreVocabulary imdb13();

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label_for_id(int class_id) const;  // 1-based
  int id_for_label(const std::string& name) const;      // 1-based, 0 if absent

 private:
  std::vector<std::string> labels_;
};

// Multi-hot genre assignment for one poster.
struct MultiHotLabel {
  std::vector<std::uint8_t> bits;  // length δ, values {0,1}

  int count() const;  // number of set bits
  bool test_id(int class_id) const;  // 1-based
  std::vector<int> ids() const;      // ascending 1-based class ids
  static MultiHotLabel from_ids(const std::vector<int>& class_ids, int delta);
};

struct PosterRecord {
  std::string path;
  std::string movie_id;
  MultiHotLabel label;
};

struct PosterManifest {
  std::vector<PosterRecord> records;
  std::size_t size() const { return records.size(); }
};

// Parses the tab-separated manifest format: path<TAB>movie_id<TAB>g1;g2;g3
// with 1-based class ids. Rejects blank lines, malformed fields, unknown or
// duplicate ids, empty label sets, and duplicate poster paths; every error
// message carries "<origin>:<line>".
PosterManifest parse_manifest(std::istream& in, const GenreVocabulary& vocab,
                              const std::string& origin);
PosterManifest load_manifest(const std::string& path,
                             const GenreVocabulary& vocab);

struct SplitRatios {
  int train = 8;
  int val = 1;
  int test = 1;
};

// Disjoint index sets over manifest records; the union covers all records.
struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Seed-deterministic split with sizes within +/-1 of the exact ratio
// (largest-remainder apportionment). A greedy pre-pass seats one positive
// record of each genre (rarest genre first) into every split that can still
// take one, so each genre is represented everywhere when feasible.
SplitAssignment split_dataset(const PosterManifest& m, SplitRatios ratios,
                              std::uint64_t seed);

// Exact joint label counts over a record subset. Flat row-major storage;
// accessors take 0-based genre indices.
struct CooccurrenceStats {
  int delta = 0;
  std::size_t subset_size = 0;
  std::vector<long long> single;      // [δ]
  std::vector<long long> pair;        // [δ*δ], symmetric, diag == single
  std::vector<long long> triple;      // [δ*δ*δ], fully symmetric
  std::vector<double> imbalance;      // positives / negatives per genre

  long long pair_at(int j, int k) const;
  long long triple_at(int j, int k, int l) const;
};

CooccurrenceStats compute_cooccurrence(const PosterManifest& m,
                                       const std::vector<std::size_t>& subset);

// CSV export: header of genre names, one labeled row per genre with the pair
// matrix, then "single" and "imbalance" rows.
void write_cooccurrence_csv(std::ostream& out, const CooccurrenceStats& stats,
                            const GenreVocabulary& vocab);

}  // namespace rdt

#endif  // RDT_DATASET_HPP_
