// Command-line front end for the poster genre classification pipeline:
// dataset ingestion and splitting, co-occurrence statistics, training,
// prediction, score fusion with weight search, probabilistic refinement of
// genre counts, and macro-averaged evaluation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdt/config.hpp"
#include "rdt/dataset.hpp"
#include "rdt/ensemble.hpp"
#include "rdt/error.hpp"
#include "rdt/image.hpp"
#include "rdt/metrics.hpp"
#include "rdt/model.hpp"
#include "rdt/refine.hpp"
#include "rdt/train.hpp"

namespace {

// Bad flag combinations and config mistakes; mapped to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string one_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

// Collects every output file of a run and publishes them together: content
// is staged to "<path>.tmp" and renamed only after all stages succeed, so a
// failing run never leaves partial outputs behind.
class OutputStage {
 public:
  void add(const std::string& path, std::string content) {
    files_.emplace_back(path, std::move(content));
  }

  void commit() {
    std::vector<std::string> staged;
    try {
      for (const auto& [path, content] : files_) {
        const std::string tmp = path + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
          if (!out) throw rdt::IoError("cannot open output file: " + tmp);
          out.write(content.data(),
                    static_cast<std::streamsize>(content.size()));
          out.flush();
          if (!out) throw rdt::IoError("failed writing output file: " + tmp);
        }
        staged.push_back(tmp);
      }
      for (const auto& [path, content] : files_) {
        std::error_code ec;
        std::filesystem::rename(path + ".tmp", path, ec);
        if (ec)
          throw rdt::IoError("cannot move output into place: " + path + ": " +
                             ec.message());
      }
    } catch (...) {
      for (const std::string& tmp : staged) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
      }
      throw;
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "key=value config file ('#' comments)");
  cmd->add_option("--set", opts.overrides,
                  "config override key=value (repeatable, wins over --config)");
  cmd->add_option("--seed", opts.seed, "random seed (wins over config/--set)");
}

rdt::HyperParams resolve_params(const CommonOpts& opts) {
  rdt::HyperParams params;
  try {
    if (!opts.config_path.empty()) {
      std::vector<std::string> warnings;
      rdt::load_hyper_params_file(opts.config_path, params, &warnings);
      for (const std::string& w : warnings)
        std::cerr << "warning: " << one_line(w) << "\n";
    }
    rdt::apply_overrides(params, opts.overrides);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (opts.seed) params.seed = *opts.seed;
  return params;
}

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string record_line(const rdt::PosterRecord& record,
                        const std::vector<int>& ids) {
  std::string line = record.path + "\t" + record.movie_id + "\t";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) line.push_back(';');
    line += std::to_string(ids[i]);
  }
  line.push_back('\n');
  return line;
}

std::string manifest_subset_tsv(const rdt::PosterManifest& manifest,
                                const std::vector<std::size_t>& indices) {
  std::string text;
  for (std::size_t idx : indices) {
    const rdt::PosterRecord& record = manifest.records[idx];
    text += record_line(record, record.label.ids());
  }
  return text;
}

std::vector<rdt::Tensor> load_images(const rdt::PosterManifest& manifest,
                                     int side) {
  std::vector<rdt::Tensor> images;
  images.reserve(manifest.size());
  for (const rdt::PosterRecord& record : manifest.records)
    images.push_back(rdt::load_poster_image(record.path, side));
  return images;
}

std::vector<rdt::MultiHotLabel> labels_of(const rdt::PosterManifest& manifest) {
  std::vector<rdt::MultiHotLabel> labels;
  labels.reserve(manifest.size());
  for (const rdt::PosterRecord& record : manifest.records)
    labels.push_back(record.label);
  return labels;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

// ----------------------------------------------------------------- ingest

struct IngestOpts {
  CommonOpts common;
  std::string manifest;
  std::string out_dir;
};

void run_ingest(const IngestOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  const rdt::GenreVocabulary vocab = params.make_vocabulary();
  const rdt::PosterManifest manifest = rdt::load_manifest(opts.manifest, vocab);
  const rdt::SplitAssignment split =
      rdt::split_dataset(manifest, params.split_ratios(), params.seed);
  std::filesystem::create_directories(opts.out_dir);
  OutputStage stage;
  stage.add(opts.out_dir + "/train.tsv",
            manifest_subset_tsv(manifest, split.train));
  stage.add(opts.out_dir + "/val.tsv", manifest_subset_tsv(manifest, split.val));
  stage.add(opts.out_dir + "/test.tsv",
            manifest_subset_tsv(manifest, split.test));
  stage.commit();
  std::cout << "train " << split.train.size() << " val " << split.val.size()
            << " test " << split.test.size() << "\n";
}

// ---------------------------------------------------------------- cooccur

struct CooccurOpts {
  CommonOpts common;
  std::string manifest;
  std::string out_csv;
  std::string tables_prefix;
};

void run_cooccur(const CooccurOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  const rdt::GenreVocabulary vocab = params.make_vocabulary();
  const rdt::PosterManifest manifest = rdt::load_manifest(opts.manifest, vocab);
  const rdt::CooccurrenceStats stats =
      rdt::compute_cooccurrence(manifest, all_indices(manifest.size()));
  OutputStage stage;
  {
    std::ostringstream out;
    rdt::write_cooccurrence_csv(out, stats, vocab);
    stage.add(opts.out_csv, out.str());
  }
  if (!opts.tables_prefix.empty()) {
    const rdt::ConditionalTables tables = rdt::build_conditional_tables(stats);
    std::ostringstream p2, p2n, p3, p3n;
    rdt::write_probability_matrix_csv(p2, tables.p2, vocab);
    rdt::write_probability_matrix_csv(p2n, tables.p2_norm, vocab);
    rdt::write_indexed_tensor_csv(p3, tables.p3, tables.delta);
    rdt::write_indexed_tensor_csv(p3n, tables.p3_norm, tables.delta);
    stage.add(opts.tables_prefix + ".p2.csv", p2.str());
    stage.add(opts.tables_prefix + ".p2norm.csv", p2n.str());
    stage.add(opts.tables_prefix + ".p3.csv", p3.str());
    stage.add(opts.tables_prefix + ".p3norm.csv", p3n.str());
  }
  stage.commit();
  std::cout << "records " << stats.subset_size << " genres " << stats.delta
            << "\n";
}

// ------------------------------------------------------------------ train

struct TrainOpts {
  CommonOpts common;
  std::string train_manifest;
  std::string val_manifest;
  std::string checkpoint_out;
  std::string history_out;
};

void run_train(const TrainOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  const rdt::GenreVocabulary vocab = params.make_vocabulary();
  const rdt::PosterManifest train_m =
      rdt::load_manifest(opts.train_manifest, vocab);
  const rdt::PosterManifest val_m = rdt::load_manifest(opts.val_manifest, vocab);
  const rdt::ModelConfig model_cfg = params.model_config();
  const std::vector<rdt::Tensor> train_images =
      load_images(train_m, model_cfg.patch.image_side);
  const std::vector<rdt::Tensor> val_images =
      load_images(val_m, model_cfg.patch.image_side);

  rdt::Model model(model_cfg, vocab, params.seed);
  const rdt::TrainResult result = rdt::train_model(
      model, train_images, labels_of(train_m), val_images, labels_of(val_m),
      params.asl_config(), params.optimizer_config(), params.train_config());

  OutputStage stage;
  {
    std::ostringstream out;
    model.save(out);
    stage.add(opts.checkpoint_out, out.str());
  }
  if (!opts.history_out.empty()) {
    std::ostringstream out;
    rdt::write_history_csv(out, result.history);
    stage.add(opts.history_out, out.str());
  }
  stage.commit();
  std::cout << "trained " << rdt::to_string(model.config().kind) << " epochs "
            << result.history.size() << " best_epoch " << result.best_epoch
            << " best_val_loss " << format_g17(result.best_val_loss)
            << " target_hit " << (result.hit_target ? 1 : 0) << "\n";
}

// ------------------------------------------------------- score assembly

// Gathers per-source score matrices for predict/refine: model checkpoints
// are evaluated on the manifest's posters, score CSVs are read as-is. With
// three sources they are fused with the weights file; sources are ordered
// checkpoints first, then CSVs, matching the weight order.
struct ScoreSourceOpts {
  std::vector<std::string> checkpoints;
  std::vector<std::string> scores_in;
  std::string weights_path;
};

void add_source_options(CLI::App* cmd, ScoreSourceOpts& opts,
                        bool allow_checkpoints) {
  if (allow_checkpoints)
    cmd->add_option("--checkpoint", opts.checkpoints,
                    "model checkpoint (1 source, or 3 to fuse)");
  cmd->add_option("--scores-in", opts.scores_in,
                  "score-matrix CSV (1 source, or 3 to fuse)");
  cmd->add_option("--weights", opts.weights_path,
                  "3-line fusion weights file (required with 3 sources)");
}

struct AssembledScores {
  rdt::GenreVocabulary vocab = rdt::GenreVocabulary::imdb13();
  rdt::PosterManifest manifest;
  std::vector<rdt::ConfidenceVector> scores;  // fused when 3 sources
};

AssembledScores assemble_scores(const rdt::HyperParams& params,
                                const std::string& manifest_path,
                                const ScoreSourceOpts& opts) {
  const std::size_t n_sources = opts.checkpoints.size() + opts.scores_in.size();
  if (n_sources != 1 && n_sources != 3)
    throw UsageError("need exactly 1 or 3 score sources (--checkpoint/"
                     "--scores-in), got " + std::to_string(n_sources));
  if (n_sources == 3 && opts.weights_path.empty())
    throw UsageError("fusing 3 score sources requires --weights");
  if (n_sources == 1 && !opts.weights_path.empty())
    throw UsageError("--weights requires exactly 3 score sources");

  std::vector<rdt::Model> models;
  models.reserve(opts.checkpoints.size());
  for (const std::string& path : opts.checkpoints)
    models.push_back(rdt::Model::load_file(path));
  AssembledScores out;
  if (!models.empty()) {
    out.vocab = models.front().vocabulary();
    for (const rdt::Model& m : models)
      if (m.vocabulary().labels() != out.vocab.labels())
        throw rdt::DomainError("checkpoints disagree on the genre vocabulary");
  } else {
    out.vocab = params.make_vocabulary();
  }
  out.manifest = rdt::load_manifest(manifest_path, out.vocab);

  std::vector<std::vector<rdt::ConfidenceVector>> sources;
  for (const rdt::Model& model : models) {
    const std::vector<rdt::Tensor> images =
        load_images(out.manifest, model.config().patch.image_side);
    std::vector<rdt::ConfidenceVector> rows;
    rows.reserve(images.size());
    for (const rdt::Tensor& image : images) rows.push_back(model.predict(image));
    sources.push_back(std::move(rows));
  }
  for (const std::string& path : opts.scores_in) {
    std::vector<rdt::ConfidenceVector> rows =
        rdt::read_scores_csv_file(path, out.vocab);
    if (rows.size() != out.manifest.size())
      throw rdt::DomainError(path + ": " + std::to_string(rows.size()) +
                             " score rows for " +
                             std::to_string(out.manifest.size()) +
                             " manifest records");
    sources.push_back(std::move(rows));
  }

  if (n_sources == 1) {
    out.scores = std::move(sources.front());
  } else {
    const rdt::EnsembleWeights weights =
        rdt::read_weights_file(opts.weights_path);
    out.scores =
        rdt::ensemble_scores(sources[0], sources[1], sources[2], weights);
  }
  return out;
}

rdt::ConditionalTables resolve_tables(const rdt::GenreVocabulary& vocab,
                                      const std::string& tables_prefix,
                                      const std::string& train_manifest,
                                      const char* mode_hint) {
  if (!tables_prefix.empty() && !train_manifest.empty())
    throw UsageError("give either --tables or --train-manifest, not both");
  if (!tables_prefix.empty())
    return rdt::read_conditional_tables(tables_prefix, vocab);
  if (!train_manifest.empty()) {
    const rdt::PosterManifest m = rdt::load_manifest(train_manifest, vocab);
    return rdt::build_conditional_tables(
        rdt::compute_cooccurrence(m, all_indices(m.size())));
  }
  throw UsageError(std::string(mode_hint) +
                   " needs conditional tables: give --tables or "
                   "--train-manifest");
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
  CommonOpts common;
  std::string manifest;
  ScoreSourceOpts sources;
  std::string mode = "top3";
  std::string tables_prefix;
  std::string train_manifest;
  std::string out;
  std::string scores_out;
  std::string heatmap_out;
};

void run_predict(const PredictOpts& opts) {
  if (opts.out.empty() && opts.scores_out.empty() && opts.heatmap_out.empty())
    throw UsageError("predict needs at least one of --out, --scores-out, "
                     "--emit-heatmap");
  const rdt::HyperParams params = resolve_params(opts.common);
  const AssembledScores assembled =
      assemble_scores(params, opts.manifest, opts.sources);

  OutputStage stage;
  std::optional<double> hit;
  if (!opts.out.empty()) {
    std::string text;
    if (opts.mode == "top3") {
      for (std::size_t i = 0; i < assembled.manifest.size(); ++i)
        text += record_line(assembled.manifest.records[i],
                            rdt::top3_ids(assembled.scores[i]));
    } else {
      const rdt::ConditionalTables tables =
          resolve_tables(assembled.vocab, opts.tables_prefix,
                         opts.train_manifest, "--mode refined");
      std::vector<rdt::GenrePrediction> preds;
      preds.reserve(assembled.manifest.size());
      for (std::size_t i = 0; i < assembled.manifest.size(); ++i) {
        preds.push_back(rdt::refine_prediction(assembled.scores[i], tables,
                                               params.refine_config()));
        text += record_line(assembled.manifest.records[i],
                            preds.back().genres);
      }
      hit = rdt::hit_ratio(preds, labels_of(assembled.manifest));
    }
    stage.add(opts.out, text);
  }
  if (!opts.scores_out.empty()) {
    std::ostringstream out;
    rdt::write_scores_csv(out, assembled.scores, assembled.vocab);
    stage.add(opts.scores_out, out.str());
  }
  if (!opts.heatmap_out.empty()) {
    std::ostringstream out;
    rdt::write_heatmap_csv(out, labels_of(assembled.manifest),
                           assembled.scores, assembled.vocab);
    stage.add(opts.heatmap_out, out.str());
  }
  stage.commit();
  std::cout << "predicted " << assembled.manifest.size() << " samples mode "
            << opts.mode << "\n";
  if (hit) std::cout << "hit_ratio " << format_g17(*hit) << "\n";
}

// ----------------------------------------------------------------- refine

struct RefineOpts {
  CommonOpts common;
  std::string manifest;
  ScoreSourceOpts sources;
  std::string tables_prefix;
  std::string train_manifest;
  std::string out;
};

void run_refine(const RefineOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  const AssembledScores assembled =
      assemble_scores(params, opts.manifest, opts.sources);
  const rdt::ConditionalTables tables = resolve_tables(
      assembled.vocab, opts.tables_prefix, opts.train_manifest, "refine");
  std::vector<rdt::GenrePrediction> preds;
  preds.reserve(assembled.manifest.size());
  std::string text;
  for (std::size_t i = 0; i < assembled.manifest.size(); ++i) {
    preds.push_back(rdt::refine_prediction(assembled.scores[i], tables,
                                           params.refine_config()));
    text += record_line(assembled.manifest.records[i], preds.back().genres);
  }
  OutputStage stage;
  stage.add(opts.out, text);
  stage.commit();
  std::cout << "refined " << assembled.manifest.size() << " samples\n";
  std::cout << "hit_ratio "
            << format_g17(rdt::hit_ratio(preds, labels_of(assembled.manifest)))
            << "\n";
}

// -------------------------------------------------------- ensemble-search

struct SearchOpts {
  CommonOpts common;
  std::string manifest;
  std::vector<std::string> scores_in;
  std::string weights_out;
};

void run_search(const SearchOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  if (opts.scores_in.size() != 3)
    throw UsageError("ensemble-search needs exactly 3 --scores-in files, got " +
                     std::to_string(opts.scores_in.size()));
  const rdt::GenreVocabulary vocab = params.make_vocabulary();
  const rdt::PosterManifest manifest = rdt::load_manifest(opts.manifest, vocab);
  std::vector<std::vector<rdt::ConfidenceVector>> sources;
  for (const std::string& path : opts.scores_in) {
    sources.push_back(rdt::read_scores_csv_file(path, vocab));
    if (sources.back().size() != manifest.size())
      throw rdt::DomainError(path + ": " +
                             std::to_string(sources.back().size()) +
                             " score rows for " +
                             std::to_string(manifest.size()) +
                             " manifest records");
  }
  const std::vector<rdt::MultiHotLabel> truth = labels_of(manifest);
  const rdt::EnsembleWeights weights =
      rdt::grid_search_weights(sources[0], sources[1], sources[2], truth,
                               params.grid_step, params.grid_metric);
  const double value = rdt::evaluate_weights(
      sources[0], sources[1], sources[2], truth, weights, params.grid_metric);
  OutputStage stage;
  {
    std::ostringstream out;
    rdt::write_weights(out, weights);
    stage.add(opts.weights_out, out.str());
  }
  stage.commit();
  std::cout << "weights " << format_g17(weights.alpha[0]) << " "
            << format_g17(weights.alpha[1]) << " "
            << format_g17(weights.alpha[2]) << "\n";
  std::cout << rdt::to_string(params.grid_metric) << " " << format_g17(value)
            << "\n";
}

// --------------------------------------------------------------- evaluate

struct EvaluateOpts {
  CommonOpts common;
  std::string pred_path;
  std::string truth_path;
  std::string report_out;
  bool partition_by_label_count = false;
  std::string subset_file;
};

// First class id on each prediction line, in file order; drives hit ratio.
std::vector<int> leading_ids(const std::string& path, int delta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rdt::IoError("cannot open predictions file: " + path);
  std::vector<int> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    const std::size_t tab2 = line.find('\t', line.find('\t') + 1);
    if (tab2 == std::string::npos)
      throw rdt::ParseError(where + ": expected 3 tab-separated fields");
    std::size_t end = tab2 + 1;
    while (end < line.size() && line[end] != ';' && line[end] != '\r') ++end;
    const std::string token = line.substr(tab2 + 1, end - tab2 - 1);
    int value = 0;
    for (char c : token) {
      if (c < '0' || c > '9')
        throw rdt::ParseError(where + ": malformed genre id '" + token + "'");
      value = value * 10 + (c - '0');
      if (value > delta)
        throw rdt::ParseError(where + ": genre id '" + token +
                              "' outside the vocabulary");
    }
    if (token.empty() || value < 1)
      throw rdt::ParseError(where + ": malformed genre id '" + token + "'");
    ids.push_back(value);
  }
  return ids;
}

std::string partition_report_path(const std::string& base, int k) {
  const std::string suffix = ".csv";
  std::string stem = base;
  if (stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0)
    stem.resize(stem.size() - suffix.size());
  return stem + ".td" + std::to_string(k) + ".csv";
}

void run_evaluate(const EvaluateOpts& opts) {
  const rdt::HyperParams params = resolve_params(opts.common);
  const rdt::GenreVocabulary vocab = params.make_vocabulary();
  const rdt::PosterManifest truth_m =
      rdt::load_manifest(opts.truth_path, vocab);
  const rdt::PosterManifest pred_m = rdt::load_manifest(opts.pred_path, vocab);
  if (pred_m.size() != truth_m.size())
    throw rdt::DomainError("prediction file has " +
                           std::to_string(pred_m.size()) + " records, truth has " +
                           std::to_string(truth_m.size()));
  std::map<std::string, std::size_t> truth_index;
  for (std::size_t i = 0; i < truth_m.size(); ++i)
    truth_index[truth_m.records[i].path] = i;

  std::vector<rdt::MultiHotLabel> pred;
  std::vector<rdt::MultiHotLabel> truth;
  std::vector<int> dominant = leading_ids(opts.pred_path, vocab.size());
  if (dominant.size() != pred_m.size())
    throw rdt::ParseError(opts.pred_path + ": prediction line count changed "
                          "between reads");
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < pred_m.size(); ++i) {
    const auto it = truth_index.find(pred_m.records[i].path);
    if (it == truth_index.end())
      throw rdt::DomainError("prediction for unknown poster '" +
                             pred_m.records[i].path + "'");
    pred.push_back(pred_m.records[i].label);
    truth.push_back(truth_m.records[it->second].label);
    paths.push_back(pred_m.records[i].path);
  }

  std::string main_tag;
  if (!opts.subset_file.empty()) {
    std::ifstream in(opts.subset_file, std::ios::binary);
    if (!in) throw rdt::IoError("cannot open subset file: " + opts.subset_file);
    std::map<std::string, std::size_t> by_path;
    for (std::size_t i = 0; i < paths.size(); ++i) by_path[paths[i]] = i;
    std::vector<std::size_t> keep;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto it = by_path.find(line);
      if (it == by_path.end())
        throw rdt::DomainError(opts.subset_file + ":" +
                               std::to_string(line_no) +
                               ": poster '" + line + "' not in the evaluation");
      keep.push_back(it->second);
    }
    if (keep.empty())
      throw rdt::DomainError(opts.subset_file + ": subset selects no records");
    std::vector<rdt::MultiHotLabel> fpred, ftruth;
    std::vector<int> fdom;
    for (std::size_t i : keep) {
      fpred.push_back(pred[i]);
      ftruth.push_back(truth[i]);
      fdom.push_back(dominant[i]);
    }
    pred.swap(fpred);
    truth.swap(ftruth);
    dominant.swap(fdom);
    main_tag = "subset " +
               std::filesystem::path(opts.subset_file).filename().string();
  }

  rdt::MetricsReport report =
      rdt::macro_report(rdt::confusion_per_genre(pred, truth));
  report.partition_tag = main_tag;

  OutputStage stage;
  {
    std::ostringstream out;
    rdt::write_report_csv(out, report, vocab);
    stage.add(opts.report_out, out.str());
  }
  std::vector<std::string> partition_notes;
  if (opts.partition_by_label_count) {
    for (int k = 1; k <= 3; ++k) {
      std::vector<rdt::MultiHotLabel> kpred, ktruth;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].count() != k) continue;
        kpred.push_back(pred[i]);
        ktruth.push_back(truth[i]);
      }
      const std::string tag = "TD<" + std::to_string(k) + ">";
      if (kpred.empty()) {
        partition_notes.push_back("partition " + tag + " empty, skipped");
        continue;
      }
      rdt::MetricsReport part =
          rdt::macro_report(rdt::confusion_per_genre(kpred, ktruth));
      part.partition_tag = tag;
      const std::string path = partition_report_path(opts.report_out, k);
      std::ostringstream out;
      rdt::write_report_csv(out, part, vocab);
      stage.add(path, out.str());
      partition_notes.push_back("partition " + tag + " " +
                                std::to_string(kpred.size()) + " samples " +
                                path);
    }
  }
  stage.commit();

  std::cout << rdt::format_report_table(report, vocab);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i].test_id(dominant[i])) ++hits;
  std::cout << "hit_ratio "
            << format_g17(static_cast<double>(hits) /
                          static_cast<double>(truth.size()))
            << "\n";
  for (const std::string& note : partition_notes)
    std::cout << note << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Movie-poster genre classification pipeline"};
  app.require_subcommand(1);

  IngestOpts ingest;
  CLI::App* ingest_cmd =
      app.add_subcommand("ingest", "split a manifest into train/val/test");
  add_common_options(ingest_cmd, ingest.common);
  ingest_cmd->add_option("--manifest", ingest.manifest, "input manifest TSV")
      ->required();
  ingest_cmd->add_option("--out-dir", ingest.out_dir,
                         "directory for train.tsv/val.tsv/test.tsv")
      ->required();

  CooccurOpts cooccur;
  CLI::App* cooccur_cmd = app.add_subcommand(
      "cooccur", "label co-occurrence counts and conditional tables");
  add_common_options(cooccur_cmd, cooccur.common);
  cooccur_cmd->add_option("--manifest", cooccur.manifest, "input manifest TSV")
      ->required();
  cooccur_cmd->add_option("--out", cooccur.out_csv, "co-occurrence CSV path")
      ->required();
  cooccur_cmd->add_option("--tables-out", cooccur.tables_prefix,
                          "also write conditional tables under this prefix");

  TrainOpts train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_common_options(train_cmd, train.common);
  train_cmd
      ->add_option("--train-manifest", train.train_manifest,
                   "training split manifest TSV")
      ->required();
  train_cmd
      ->add_option("--val-manifest", train.val_manifest,
                   "validation split manifest TSV")
      ->required();
  train_cmd
      ->add_option("--checkpoint-out", train.checkpoint_out,
                   "output checkpoint path")
      ->required();
  train_cmd->add_option("--history-out", train.history_out,
                        "per-epoch loss history CSV");

  PredictOpts predict;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "score posters and emit predictions");
  add_common_options(predict_cmd, predict.common);
  predict_cmd->add_option("--manifest", predict.manifest, "input manifest TSV")
      ->required();
  add_source_options(predict_cmd, predict.sources, true);
  predict_cmd->add_option("--mode", predict.mode, "top3 or refined")
      ->check(CLI::IsMember({"top3", "refined"}));
  predict_cmd->add_option("--tables", predict.tables_prefix,
                          "conditional-tables prefix (refined mode)");
  predict_cmd->add_option("--train-manifest", predict.train_manifest,
                          "build tables from this manifest (refined mode)");
  predict_cmd->add_option("--out", predict.out, "predictions TSV path");
  predict_cmd->add_option("--scores-out", predict.scores_out,
                          "write the (fused) score matrix CSV");
  predict_cmd->add_option("--emit-heatmap", predict.heatmap_out,
                          "write truth-bits and scores per sample CSV");

  RefineOpts refine;
  CLI::App* refine_cmd = app.add_subcommand(
      "refine", "variable genre-count selection from score matrices");
  add_common_options(refine_cmd, refine.common);
  refine_cmd->add_option("--manifest", refine.manifest, "input manifest TSV")
      ->required();
  add_source_options(refine_cmd, refine.sources, false);
  refine_cmd->add_option("--tables", refine.tables_prefix,
                         "conditional-tables prefix");
  refine_cmd->add_option("--train-manifest", refine.train_manifest,
                         "build tables from this manifest");
  refine_cmd->add_option("--out", refine.out, "predictions TSV path")
      ->required();

  SearchOpts search;
  CLI::App* search_cmd = app.add_subcommand(
      "ensemble-search", "grid-search fusion weights on validation scores");
  add_common_options(search_cmd, search.common);
  search_cmd->add_option("--manifest", search.manifest, "validation manifest TSV")
      ->required();
  search_cmd
      ->add_option("--scores-in", search.scores_in,
                   "exactly 3 score-matrix CSVs")
      ->required();
  search_cmd
      ->add_option("--weights-out", search.weights_out,
                   "output weights file (3 lines)")
      ->required();

  EvaluateOpts evaluate;
  CLI::App* evaluate_cmd = app.add_subcommand(
      "evaluate", "macro metrics of predictions against ground truth");
  add_common_options(evaluate_cmd, evaluate.common);
  evaluate_cmd->add_option("--pred", evaluate.pred_path, "predictions TSV")
      ->required();
  evaluate_cmd->add_option("--truth", evaluate.truth_path, "ground-truth TSV")
      ->required();
  evaluate_cmd
      ->add_option("--report-out", evaluate.report_out, "report CSV path")
      ->required();
  evaluate_cmd->add_flag("--partition-by-label-count",
                         evaluate.partition_by_label_count,
                         "also report per true-genre-count subsets TD<1..3>");
  evaluate_cmd->add_option("--subset-file", evaluate.subset_file,
                           "restrict evaluation to the poster paths listed "
                           "in this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(ingest_cmd)) run_ingest(ingest);
    else if (app.got_subcommand(cooccur_cmd)) run_cooccur(cooccur);
    else if (app.got_subcommand(train_cmd)) run_train(train);
    else if (app.got_subcommand(predict_cmd)) run_predict(predict);
    else if (app.got_subcommand(refine_cmd)) run_refine(refine);
    else if (app.got_subcommand(search_cmd)) run_search(search);
    else if (app.got_subcommand(evaluate_cmd)) run_evaluate(evaluate);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const rdt::NumericError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 4;
  } catch (const rdt::ContractError& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 3;
  }
}
