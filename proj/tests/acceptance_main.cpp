// Release gate for the library. Nine standalone checks cover gradient
// integrity, attention normalization, trainability on separable data, the
// genre-count refinement module, metric identities, co-occurrence counting,
// the ensemble weight search, loss definitions, and end-to-end byte
// reproducibility of the command-line pipeline. Each check prints one
// PASS/FAIL line; the process exits with the number of failed checks.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rdt/config.hpp"
#include "rdt/dataset.hpp"
#include "rdt/ensemble.hpp"
#include "rdt/image.hpp"
#include "rdt/metrics.hpp"
#include "rdt/model.hpp"
#include "rdt/refine.hpp"
#include "rdt/rng.hpp"
#include "rdt/tensor.hpp"
#include "rdt/train.hpp"

namespace fs = std::filesystem;

namespace {

struct CheckResult {
  bool ok = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// Desk-scale four-genre model shared by the gradient, attention, and overfit
// checks: 64x64 posters, 16x16 patches, width 32, 2 encoders, 4 heads.
rdt::ModelConfig desk_config(rdt::ModelKind kind) {
  rdt::ModelConfig cfg;  // defaults carry the desk-scale geometry
  cfg.kind = kind;
  cfg.classes = 4;
  return cfg;
}

const rdt::GenreVocabulary& four_genres() {
  static const rdt::GenreVocabulary vocab({"G1", "G2", "G3", "G4"});
  return vocab;
}

rdt::Tensor random_image(rdt::Rng& rng, int side) {
  std::vector<double> pix(static_cast<std::size_t>(side) * side * 3);
  for (double& v : pix) v = rng.uniform(0.0, 1.0);
  return rdt::Tensor::from_data({side, side, 3}, std::move(pix));
}

// ---------------------------------------------------------------- check 1

// Autodiff gradients of the asymmetric loss against central finite
// differences on 50 randomly sampled parameters of the desk-scale model.
CheckResult check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  rdt::Rng rng(12);
  const rdt::Model model(desk_config(rdt::ModelKind::rdt), four_genres(), 11);
  const rdt::Tensor image = random_image(rng, 64);
  const std::vector<rdt::MultiHotLabel> labels = {
      rdt::MultiHotLabel::from_ids({1, 3}, 4)};
  const rdt::AslConfig asl;

  auto loss_value = [&] {
    const rdt::Tensor scores = rdt::reshape(model.forward(image), {1, 4});
    return rdt::asl_loss(scores, labels, asl);
  };

  const rdt::Tensor loss = loss_value();
  rdt::backward(loss);

  std::vector<rdt::Tensor> params = model.parameters();
  std::size_t total = 0;
  for (const rdt::Tensor& p : params) total += p.size();

  std::set<std::size_t> picks;
  while (picks.size() < 50) picks.insert(rng.index(total));

  const double step = 1e-4;
  double worst = 0.0;
  int within = 0;
  for (std::size_t flat : picks) {
    std::size_t t = 0;
    std::size_t offset = flat;
    while (offset >= params[t].size()) offset -= params[t++].size();
    rdt::Tensor& p = params[t];
    const double grad = p.grad()[offset];
    const double saved = p.data()[offset];
    p.mutable_data()[offset] = saved + step;
    const double up = loss_value().item();
    p.mutable_data()[offset] = saved - step;
    const double down = loss_value().item();
    p.mutable_data()[offset] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(grad - fd);
    const double tol =
        std::max(1e-5, 1e-3 * std::max(std::abs(grad), std::abs(fd)));
    worst = std::max(worst, err);
    if (err <= tol) ++within;
  }
  const double sec = seconds_since(t0);
  CheckResult r;
  r.ok = within == 50 && sec < 120.0;
  r.detail = fmt("%d/50 within max(1e-5 abs, 1e-3 rel), worst dev %.2e, %.1fs",
                 within, worst, sec);
  return r;
}

// ---------------------------------------------------------------- check 2

// Every softmaxed attention row sums to 1, and encoders whose residual
// branches are zeroed out reproduce their input exactly.
CheckResult check_attention() {
  rdt::Rng rng(21);
  const rdt::Model models[] = {
      rdt::Model(desk_config(rdt::ModelKind::rdt), four_genres(), 23),
      rdt::Model(desk_config(rdt::ModelKind::rt), four_genres(), 24)};

  long long rows = 0;
  double worst_row = 0.0;
  for (int pass = 0; pass < 100; ++pass) {
    const rdt::Model& model = models[pass % 2];
    rdt::AttentionTrace trace;
    model.forward(random_image(rng, 64), &trace);
    for (const auto& layer : trace.layers)
      for (const rdt::Tensor& head : layer) {
        const int t = head.dim(0);
        for (int i = 0; i < t; ++i) {
          double sum = 0.0;
          for (int j = 0; j < t; ++j) sum += head.at(i * t + j);
          worst_row = std::max(worst_row, std::abs(sum - 1.0));
          ++rows;
        }
      }
  }

  // Zeroed-out sublayers: attention output map and second MLP layer all
  // zero, so both residual additions contribute exactly nothing.
  const int d = 32, heads = 4, head_dim = 8, t_len = 17;
  double worst_identity = 0.0;
  for (int pass = 0; pass < 100; ++pass) {
    rdt::EncoderParams enc;
    auto rand_tensor = [&rng](std::vector<int> shape, double lo, double hi) {
      rdt::Tensor x = rdt::Tensor::zeros(shape);
      for (double& v : x.mutable_data()) v = rng.uniform(lo, hi);
      return x;
    };
    enc.norm1_gain = rand_tensor({d}, 0.9, 1.1);
    enc.norm1_bias = rand_tensor({d}, -0.1, 0.1);
    enc.norm2_gain = rand_tensor({d}, 0.9, 1.1);
    enc.norm2_bias = rand_tensor({d}, -0.1, 0.1);
    enc.attention.heads = heads;
    for (int h = 0; h < heads; ++h) {
      enc.attention.query.push_back(rand_tensor({d, head_dim}, -0.5, 0.5));
      enc.attention.key.push_back(rand_tensor({d, head_dim}, -0.5, 0.5));
      enc.attention.value.push_back(rand_tensor({d, head_dim}, -0.5, 0.5));
    }
    enc.attention.output = rdt::Tensor::zeros({heads * head_dim, d});
    enc.mlp_w1 = rand_tensor({d, 2 * d}, -0.5, 0.5);
    enc.mlp_b1 = rand_tensor({2 * d}, -0.1, 0.1);
    enc.mlp_w2 = rdt::Tensor::zeros({2 * d, d});
    enc.mlp_b2 = rdt::Tensor::zeros({d});

    const rdt::Tensor z = rand_tensor({t_len, d}, -1.0, 1.0);
    const rdt::Tensor out = rdt::encoder_block(z, enc);
    for (std::size_t i = 0; i < z.size(); ++i)
      worst_identity = std::max(
          worst_identity, std::abs(out.at(i) - z.at(i)));
  }

  CheckResult r;
  r.ok = worst_row <= 1e-6 && worst_identity <= 1e-9;
  r.detail = fmt("%lld attention rows, worst |sum-1| %.2e; "
                 "100 zeroed encoders, worst identity dev %.2e",
                 rows, worst_row, worst_identity);
  return r;
}

// ---------------------------------------------------------------- check 3

// Desk-scale training drives the asymmetric loss under 0.01 on 32 synthetic
// posters whose genres are marked by bright quadrant/channel signals.
CheckResult check_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const int delta = 4, side = 64;
  rdt::Rng rng(31);

  std::vector<rdt::Tensor> images;
  std::vector<rdt::MultiHotLabel> labels;
  for (int i = 0; i < 32; ++i) {
    std::vector<int> ids = {1 + i % 4};
    if (i % 3 == 1) ids.push_back(1 + (i + 1) % 4);
    if (i % 5 == 2) ids.push_back(1 + (i + 2) % 4);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    labels.push_back(rdt::MultiHotLabel::from_ids(ids, delta));

    std::vector<double> pix(static_cast<std::size_t>(side) * side * 3);
    for (double& v : pix) v = 0.1 + rng.uniform(-0.03, 0.03);
    for (int g = 0; g < delta; ++g) {
      if (!labels.back().bits[static_cast<std::size_t>(g)]) continue;
      const int y0 = (g / 2) * 32, x0 = (g % 2) * 32;
      for (int y = y0; y < y0 + 32; ++y)
        for (int x = x0; x < x0 + 32; ++x)
          pix[(static_cast<std::size_t>(y) * side + x) * 3 + g % 3] += 0.8;
    }
    images.push_back(rdt::Tensor::from_data({side, side, 3}, std::move(pix)));
  }

  rdt::Model model(desk_config(rdt::ModelKind::rdt), four_genres(), 7);
  rdt::OptimizerConfig opt;
  opt.lr = 3e-3;
  rdt::TrainConfig tc;
  tc.batch_size = 8;
  tc.patience = 500;
  tc.max_epochs = 500;
  tc.seed = 7;
  tc.target_train_loss = 0.01;

  const rdt::TrainResult res = rdt::train_model(
      model, images, labels, images, labels, rdt::AslConfig{}, opt, tc);

  // The validation set above is the training set itself, so the best
  // validation loss is the full-set training loss of the restored weights.
  const double sec = seconds_since(t0);
  CheckResult r;
  r.ok = res.hit_target && res.history.size() <= 500 &&
         res.best_val_loss < 0.01 && sec < 300.0;
  r.detail = fmt("loss %.5f after %zu epochs (target hit: %s), %.1fs",
                 res.best_val_loss, res.history.size(),
                 res.hit_target ? "yes" : "no", sec);
  return r;
}

// ---------------------------------------------------------------- check 4

// refine_prediction against an independent brute-force scan of the selection
// rules on 1000 random 13-genre instances and 11 threshold pairs.
CheckResult check_refinement() {
  const int delta = 13;
  rdt::Rng rng(41);

  std::vector<rdt::RefineConfig> thresholds(1);  // defaults: 0.3 / 0.03
  for (int i = 0; i < 10; ++i) {
    rdt::RefineConfig cfg;
    cfg.tau = rng.uniform(0.05, 0.9);
    cfg.tau_prime = rng.uniform(0.0, cfg.tau);
    thresholds.push_back(cfg);
  }

  // Alternates between diffuse manifests (ids over all 13 genres) and
  // concentrated ones (ids over 4 genres), so normalized association rows
  // range from flat to spiked and the 2nd/3rd selection paths both fire.
  auto random_tables = [&rng, delta](bool concentrated) {
    rdt::PosterManifest m;
    const int n = 40 + static_cast<int>(rng.index(160));
    const int pool = concentrated ? 4 : delta;
    for (int i = 0; i < n; ++i) {
      std::set<int> ids;
      const int want = 1 + static_cast<int>(rng.index(3));
      while (static_cast<int>(ids.size()) < want)
        ids.insert(1 + static_cast<int>(rng.index(pool)));
      rdt::PosterRecord rec;
      rec.path = "p" + std::to_string(i);
      rec.movie_id = "m" + std::to_string(i);
      rec.label = rdt::MultiHotLabel::from_ids(
          std::vector<int>(ids.begin(), ids.end()), delta);
      m.records.push_back(std::move(rec));
    }
    std::vector<std::size_t> all(m.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return rdt::build_conditional_tables(rdt::compute_cooccurrence(m, all));
  };

  auto brute_force = [delta](const rdt::ConfidenceVector& rho,
                             const rdt::ConditionalTables& tb,
                             const rdt::RefineConfig& cfg) {
    rdt::GenrePrediction out;
    int j = 0;
    for (int g = 1; g < delta; ++g)
      if (rho.scores[static_cast<std::size_t>(g)] >
          rho.scores[static_cast<std::size_t>(j)])
        j = g;
    out.genres.push_back(j + 1);
    out.step_scores.push_back(rho.scores[static_cast<std::size_t>(j)]);

    int k = -1;
    double best2 = -1.0;
    for (int g = 0; g < delta; ++g) {
      if (g == j) continue;
      const double v =
          rho.scores[static_cast<std::size_t>(g)] * tb.p2_norm_at(j, g);
      if (v > best2) {
        best2 = v;
        k = g;
      }
    }
    if (k < 0 || best2 <= cfg.tau) return out;
    out.genres.push_back(k + 1);
    out.step_scores.push_back(best2);

    int l = -1;
    double best3 = -1.0;
    for (int g = 0; g < delta; ++g) {
      if (g == j || g == k) continue;
      const double v = rho.scores[static_cast<std::size_t>(g)] *
                       tb.p2_norm_at(j, g) * tb.p3_norm_at(j, k, g);
      if (v > best3) {
        best3 = v;
        l = g;
      }
    }
    if (l < 0 || best3 <= cfg.tau_prime) return out;
    out.genres.push_back(l + 1);
    out.step_scores.push_back(best3);
    return out;
  };

  rdt::ConditionalTables tables = random_tables(false);
  long long mismatches = 0;
  long long pairs = 0, triples = 0;
  for (int i = 0; i < 1000; ++i) {
    if (i % 50 == 49) tables = random_tables((i / 50) % 2 == 0);
    rdt::ConfidenceVector rho;
    for (int g = 0; g < delta; ++g)
      rho.scores.push_back(rng.uniform(0.001, 0.999));
    for (const rdt::RefineConfig& cfg : thresholds) {
      const rdt::GenrePrediction got =
          rdt::refine_prediction(rho, tables, cfg);
      const rdt::GenrePrediction want = brute_force(rho, tables, cfg);
      if (got.genres != want.genres || got.step_scores != want.step_scores)
        ++mismatches;
      if (got.genres.size() == 2) ++pairs;
      if (got.genres.size() == 3) ++triples;
    }
  }

  CheckResult r;
  r.ok = mismatches == 0 && pairs > 0 && triples > 0;
  r.detail = fmt("11000 instance evaluations, %lld mismatches "
                 "(%lld two-genre and %lld three-genre outcomes)",
                 mismatches, pairs, triples);
  return r;
}

// ---------------------------------------------------------------- check 5

// Balanced accuracy equals the mean of recall and specificity; the recorded
// reference row is consistent under that identity; macro F-measure is the
// unweighted mean of per-genre F1 on a hand-computed fixture.
CheckResult check_metric_identities() {
  rdt::Rng rng(51);
  const int delta = 8, n = 107;
  std::vector<rdt::MultiHotLabel> pred(n), truth(n);
  for (int i = 0; i < n; ++i) {
    pred[static_cast<std::size_t>(i)].bits.resize(delta);
    truth[static_cast<std::size_t>(i)].bits.resize(delta);
    for (int g = 0; g < delta; ++g) {
      pred[static_cast<std::size_t>(i)].bits[static_cast<std::size_t>(g)] =
          rng.index(2) ? 1 : 0;
      truth[static_cast<std::size_t>(i)].bits[static_cast<std::size_t>(g)] =
          rng.index(3) == 0 ? 1 : 0;
    }
  }
  const rdt::MetricsReport report =
      rdt::macro_report(rdt::confusion_per_genre(pred, truth));
  double worst_ba = 0.0;
  for (const rdt::MetricsRow& row : report.per_genre)
    worst_ba = std::max(worst_ba,
                        std::abs(row.balanced_accuracy -
                                 (row.recall + row.specificity) / 2.0));
  worst_ba = std::max(worst_ba,
                      std::abs(report.macro.balanced_accuracy -
                               (report.macro.recall +
                                report.macro.specificity) / 2.0));

  // Consistency of the recorded full-scale ensemble row under the identity.
  const double reference_ba = (57.88 + 87.35) / 2.0;
  const bool reference_ok = std::abs(reference_ba - 72.615) < 1e-12 &&
                            std::abs(reference_ba - 72.61) <= 0.01;

  // Hand fixture: three genres over ten samples with known per-genre counts
  // (tp,fp,fn): (3,1,1), (2,2,0), (0,0,2).
  auto column = [](std::vector<rdt::MultiHotLabel>& rows, int g,
                   std::initializer_list<int> bits) {
    int i = 0;
    for (int b : bits)
      rows[static_cast<std::size_t>(i++)].bits[static_cast<std::size_t>(g)] =
          static_cast<std::uint8_t>(b);
  };
  std::vector<rdt::MultiHotLabel> hp(10), ht(10);
  for (auto* rows : {&hp, &ht})
    for (rdt::MultiHotLabel& row : *rows) row.bits.assign(3, 0);
  column(hp, 0, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  column(ht, 0, {1, 1, 1, 0, 1, 0, 0, 0, 0, 0});
  column(hp, 1, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  column(ht, 1, {1, 1, 0, 0, 0, 0, 0, 0, 0, 0});
  column(hp, 2, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  column(ht, 2, {1, 1, 0, 0, 0, 0, 0, 0, 0, 0});
  const rdt::MetricsReport hand =
      rdt::macro_report(rdt::confusion_per_genre(hp, ht));
  auto f1 = [](double tp, double fp, double fn) {
    const double p = tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0;
    const double rc = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
    return p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
  };
  const double macro_f1 = (f1(3, 1, 1) + f1(2, 2, 0) + f1(0, 0, 2)) / 3.0;
  const double fm_dev = std::abs(hand.macro.f_measure - macro_f1);

  CheckResult r;
  r.ok = worst_ba <= 1e-9 && reference_ok && fm_dev <= 1e-4;
  r.detail = fmt("balanced-accuracy identity worst dev %.2e; "
                 "(57.88+87.35)/2 = %.3f vs recorded 72.61; "
                 "macro F dev %.2e",
                 worst_ba, reference_ba, fm_dev);
  return r;
}

// ---------------------------------------------------------------- check 6

// Co-occurrence statistics and conditional tables equal brute-force set
// counting on 50 random toy manifests, zero-denominator rows included.
CheckResult check_cooccurrence() {
  rdt::Rng rng(61);
  int manifests_ok = 0;
  long long zero_singles = 0, zero_pairs = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int delta = 2 + static_cast<int>(rng.index(5));  // 2..6
    const int n = 5 + static_cast<int>(rng.index(46));     // 5..50
    // Every fifth manifest never uses the last genre, forcing genuine
    // zero-count rows through the table builder.
    const int pool = trial % 5 == 4 && delta > 1 ? delta - 1 : delta;
    rdt::PosterManifest m;
    for (int i = 0; i < n; ++i) {
      std::set<int> ids;
      const int want =
          1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(
                  std::min(3, pool))));
      while (static_cast<int>(ids.size()) < want)
        ids.insert(1 + static_cast<int>(rng.index(pool)));
      rdt::PosterRecord rec;
      rec.path = "p" + std::to_string(i);
      rec.movie_id = "m" + std::to_string(i);
      rec.label = rdt::MultiHotLabel::from_ids(
          std::vector<int>(ids.begin(), ids.end()), delta);
      m.records.push_back(std::move(rec));
    }
    std::vector<std::size_t> all(m.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const rdt::CooccurrenceStats stats = rdt::compute_cooccurrence(m, all);
    const rdt::ConditionalTables tables = rdt::build_conditional_tables(stats);

    // Independent set counting straight off the label bits.
    const std::size_t d = static_cast<std::size_t>(delta);
    std::vector<long long> single(d, 0), pair(d * d, 0), triple(d * d * d, 0);
    for (const rdt::PosterRecord& rec : m.records)
      for (int a = 0; a < delta; ++a) {
        if (!rec.label.bits[static_cast<std::size_t>(a)]) continue;
        ++single[static_cast<std::size_t>(a)];
        for (int b = 0; b < delta; ++b) {
          if (!rec.label.bits[static_cast<std::size_t>(b)]) continue;
          ++pair[static_cast<std::size_t>(a) * d + b];
          for (int c = 0; c < delta; ++c)
            if (rec.label.bits[static_cast<std::size_t>(c)])
              ++triple[(static_cast<std::size_t>(a) * d + b) * d + c];
        }
      }
    bool ok = stats.delta == delta &&
              stats.subset_size == static_cast<std::size_t>(n) &&
              stats.single == single && stats.pair == pair &&
              stats.triple == triple;
    for (int j = 0; j < delta && ok; ++j) {
      const long long pos = single[static_cast<std::size_t>(j)];
      const long long neg = n - pos;
      const double imb = neg == 0
                             ? std::numeric_limits<double>::infinity()
                             : static_cast<double>(pos) / neg;
      ok = stats.imbalance[static_cast<std::size_t>(j)] == imb;
      if (pos == 0) ++zero_singles;
    }

    // Conditional tables from the independent counts, same zero-denominator
    // conventions: rows with no mass stay zero.
    std::vector<double> p2(d * d, 0.0), p2n(d * d, 0.0);
    std::vector<double> p3(d * d * d, 0.0), p3n(d * d * d, 0.0);
    for (int j = 0; j < delta && ok; ++j) {
      for (int k = 0; k < delta; ++k)
        p2[static_cast<std::size_t>(j) * d + k] =
            j == k ? 1.0
            : single[static_cast<std::size_t>(j)] == 0
                ? 0.0
                : static_cast<double>(pair[static_cast<std::size_t>(j) * d + k]) /
                      static_cast<double>(single[static_cast<std::size_t>(j)]);
      double row = 0.0;
      for (int k = 0; k < delta; ++k)
        if (k != j) row += p2[static_cast<std::size_t>(j) * d + k];
      if (row > 0.0)
        for (int k = 0; k < delta; ++k)
          if (k != j)
            p2n[static_cast<std::size_t>(j) * d + k] =
                p2[static_cast<std::size_t>(j) * d + k] / row;
    }
    for (int j = 0; j < delta && ok; ++j)
      for (int k = 0; k < delta; ++k) {
        const long long njk = pair[static_cast<std::size_t>(j) * d + k];
        if (njk == 0) ++zero_pairs;
        const std::size_t base = (static_cast<std::size_t>(j) * d + k) * d;
        if (njk > 0)
          for (int l = 0; l < delta; ++l)
            p3[base + static_cast<std::size_t>(l)] =
                static_cast<double>(
                    triple[base + static_cast<std::size_t>(l)]) /
                static_cast<double>(njk);
        double sum = 0.0;
        for (int l = 0; l < delta; ++l)
          if (l != j && l != k) sum += p3[base + static_cast<std::size_t>(l)];
        if (sum > 0.0)
          for (int l = 0; l < delta; ++l)
            if (l != j && l != k)
              p3n[base + static_cast<std::size_t>(l)] =
                  p3[base + static_cast<std::size_t>(l)] / sum;
      }
    ok = ok && tables.p2 == p2 && tables.p2_norm == p2n && tables.p3 == p3 &&
         tables.p3_norm == p3n;
    if (ok) ++manifests_ok;
  }
  CheckResult r;
  r.ok = manifests_ok == 50;
  r.detail = fmt("%d/50 manifests exact (%lld zero-count genres, "
                 "%lld zero-count pairs exercised)",
                 manifests_ok, zero_singles, zero_pairs);
  return r;
}

// ---------------------------------------------------------------- check 7

// Grid search at step 0.05 returns exactly the optimum of an independent
// exhaustive lattice scan for all three selection metrics; vertex weights
// reproduce single sources exactly and fusion stays inside the source range.
CheckResult check_ensemble() {
  rdt::Rng rng(71);
  const int n = 14, delta = 5;
  auto random_scores = [&rng, delta](int rows) {
    std::vector<rdt::ConfidenceVector> out;
    for (int i = 0; i < rows; ++i) {
      rdt::ConfidenceVector rho;
      for (int g = 0; g < delta; ++g)
        rho.scores.push_back(rng.uniform(0.01, 0.99));
      out.push_back(std::move(rho));
    }
    return out;
  };
  const auto s1 = random_scores(n), s2 = random_scores(n), s3 = random_scores(n);
  std::vector<rdt::MultiHotLabel> truth;
  for (int i = 0; i < n; ++i) {
    std::set<int> ids;
    const int want = 1 + static_cast<int>(rng.index(3));
    while (static_cast<int>(ids.size()) < want)
      ids.insert(1 + static_cast<int>(rng.index(delta)));
    truth.push_back(rdt::MultiHotLabel::from_ids(
        std::vector<int>(ids.begin(), ids.end()), delta));
  }

  bool search_ok = true;
  std::string search_note;
  for (const rdt::SelectionMetric metric :
       {rdt::SelectionMetric::balanced_accuracy,
        rdt::SelectionMetric::f_measure, rdt::SelectionMetric::hamming_loss}) {
    const bool minimize = metric == rdt::SelectionMetric::hamming_loss;
    const int divisions = 20;  // step 0.05
    const double unit = 1.0 / divisions;
    rdt::EnsembleWeights best;
    double best_value = 0.0;
    bool first = true;
    for (int a = 0; a <= divisions; ++a)
      for (int b = 0; b <= divisions - a; ++b) {
        const int c = divisions - a - b;
        rdt::EnsembleWeights w;
        w.alpha[0] = a * unit;
        w.alpha[1] = b * unit;
        w.alpha[2] =
            c == 0 ? 0.0 : std::max(0.0, 1.0 - w.alpha[0] - w.alpha[1]);
        const double value =
            rdt::evaluate_weights(s1, s2, s3, truth, w, metric);
        const bool better =
            first || (minimize ? value < best_value : value > best_value);
        if (better) {
          best = w;
          best_value = value;
          first = false;
        }
      }
    const rdt::EnsembleWeights got =
        rdt::grid_search_weights(s1, s2, s3, truth, 0.05, metric);
    const double got_value =
        rdt::evaluate_weights(s1, s2, s3, truth, got, metric);
    if (got.alpha != best.alpha || got_value != best_value) {
      search_ok = false;
      search_note += " " + rdt::to_string(metric) + " diverged";
    }
  }

  rdt::EnsembleWeights vertex;
  bool vertex_ok = true;
  const std::vector<rdt::ConfidenceVector>* sources[] = {&s1, &s2, &s3};
  for (int v = 0; v < 3; ++v) {
    vertex.alpha = {0.0, 0.0, 0.0};
    vertex.alpha[static_cast<std::size_t>(v)] = 1.0;
    const auto fused = rdt::ensemble_scores(s1, s2, s3, vertex);
    for (int i = 0; i < n; ++i)
      vertex_ok = vertex_ok && fused[static_cast<std::size_t>(i)].scores ==
                                   (*sources[v])[static_cast<std::size_t>(i)]
                                       .scores;
  }

  rdt::EnsembleWeights mid;
  mid.alpha = {0.25, 0.45, 0.3};
  const auto fused = rdt::ensemble_scores(s1, s2, s3, mid);
  bool convex_ok = true;
  for (int i = 0; i < n; ++i)
    for (int g = 0; g < delta; ++g) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const std::size_t gg = static_cast<std::size_t>(g);
      const double lo = std::min(
          {s1[ii].scores[gg], s2[ii].scores[gg], s3[ii].scores[gg]});
      const double hi = std::max(
          {s1[ii].scores[gg], s2[ii].scores[gg], s3[ii].scores[gg]});
      convex_ok = convex_ok && fused[ii].scores[gg] >= lo - 1e-15 &&
                  fused[ii].scores[gg] <= hi + 1e-15;
    }

  CheckResult r;
  r.ok = search_ok && vertex_ok && convex_ok;
  r.detail = fmt("231-point lattice matched for ba/fm/hl%s; vertices exact: "
                 "%s; convexity: %s",
                 search_note.c_str(), vertex_ok ? "yes" : "no",
                 convex_ok ? "yes" : "no");
  return r;
}

// ---------------------------------------------------------------- check 8

// Hand-counted Hamming-loss and hit-ratio fixtures reproduce exactly. The
// full-scale refined-ensemble hit ratio 0.7701 is recorded for documentation
// only; this desk-scale suite does not attempt to reproduce it.
CheckResult check_loss_definitions() {
  auto label = [](std::initializer_list<int> bits) {
    rdt::MultiHotLabel l;
    for (int b : bits) l.bits.push_back(static_cast<std::uint8_t>(b));
    return l;
  };
  const std::vector<rdt::MultiHotLabel> pred = {
      label({1, 0, 0}), label({1, 1, 0}), label({0, 0, 1}), label({1, 0, 1})};
  const std::vector<rdt::MultiHotLabel> truth = {
      label({1, 0, 0}), label({0, 1, 1}), label({0, 0, 1}), label({0, 1, 0})};
  // Disagreements per sample: 0 + 2 + 0 + 3 = 5 of 12 bits.
  const bool hl_ok =
      rdt::hamming_loss(pred, truth) == 5.0 / 12.0 &&
      rdt::hamming_loss(pred, pred) == 0.0 &&
      rdt::hamming_loss({label({1, 1}), label({0, 0})},
                        {label({0, 0}), label({1, 1})}) == 1.0;

  auto prediction = [](std::initializer_list<int> genres) {
    rdt::GenrePrediction p;
    p.genres = genres;
    p.step_scores.assign(p.genres.size(), 0.5);
    return p;
  };
  // Dominant genres 1, 2, 3, 1 against the truths below hit 3 of 4 times.
  const std::vector<rdt::GenrePrediction> preds = {
      prediction({1, 2}), prediction({2}), prediction({3, 1}),
      prediction({1})};
  const std::vector<rdt::MultiHotLabel> hit_truth = {
      label({1, 1, 0}), label({0, 1, 1}), label({0, 0, 1}),
      label({0, 1, 1})};
  const bool hit_ok = rdt::hit_ratio(preds, hit_truth) == 3.0 / 4.0 &&
                      rdt::hit_ratio({preds[0]}, {hit_truth[0]}) == 1.0;

  // Reference value from the original full-scale evaluation, kept only as
  // documentation; no desk-scale run reproduces it.
  const double documented_full_scale_hit_ratio = 0.7701;
  const bool doc_ok = documented_full_scale_hit_ratio == 0.7701;

  CheckResult r;
  r.ok = hl_ok && hit_ok && doc_ok;
  r.detail = fmt("hamming fixtures %s, hit fixtures %s; full-scale hit ratio "
                 "0.7701 recorded as documentation, not reproduced here",
                 hl_ok ? "exact" : "WRONG", hit_ok ? "exact" : "WRONG");
  return r;
}

// ---------------------------------------------------------------- check 9

// Two identical-seed runs of the command-line train/predict/refine/evaluate
// pipeline produce byte-identical artifacts.
std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + RDT_CLI_PATH +
                          "' " + args + " > .out 2> .err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

CheckResult check_reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "rdt_acceptance_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);

  rdt::Rng rng(91);
  const std::vector<std::vector<int>> genre_sets = {
      {7},  {1, 13}, {5},  {7, 11}, {2, 12}, {9},
      {5, 7}, {3, 6}, {10, 4}, {8},  {7, 9},  {1}};
  std::ofstream train(dir / "train.tsv"), val(dir / "val.tsv"),
      test(dir / "test.tsv");
  for (std::size_t i = 0; i < genre_sets.size(); ++i) {
    rdt::ImageU8 img;
    img.height = img.width = 16;
    img.channels = 3;
    for (int p = 0; p < 16 * 16 * 3; ++p)
      img.pixels.push_back(static_cast<std::uint8_t>(rng.index(256)));
    const std::string name = "poster" + std::to_string(i) + ".ppm";
    rdt::write_ppm((dir / name).string(), img);
    std::ostream& out = i < 8 ? train : i < 10 ? val : test;
    out << name << "\tm" << i << "\t";
    for (std::size_t k = 0; k < genre_sets[i].size(); ++k)
      out << (k ? ";" : "") << genre_sets[i][k];
    out << "\n";
  }
  train.close();
  val.close();
  test.close();
  std::ofstream cfg(dir / "fast.cfg");
  cfg << "image_size = 16\npatch_size = 8\nembed_dim = 8\n"
         "extractor_channels = 4\nencoders = 1\nheads = 2\n"
         "batch_size = 4\nmax_epochs = 3\npatience = 2\n";
  cfg.close();

  bool commands_ok = true;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    commands_ok =
        commands_ok &&
        run_cli(dir, "train --train-manifest train.tsv --val-manifest val.tsv "
                     "--checkpoint-out " + t + ".ckpt --config fast.cfg "
                     "--seed 3") == 0 &&
        run_cli(dir, "predict --manifest test.tsv --checkpoint " + t +
                     ".ckpt --mode top3 --out " + t + ".pred.tsv "
                     "--scores-out " + t + ".scores.csv --config fast.cfg") ==
            0 &&
        run_cli(dir, "refine --manifest test.tsv --scores-in " + t +
                     ".scores.csv --train-manifest train.tsv --out " + t +
                     ".refined.tsv --config fast.cfg") == 0 &&
        run_cli(dir, "evaluate --pred " + t + ".refined.tsv --truth test.tsv "
                     "--report-out " + t + ".report.csv --config fast.cfg") ==
            0;
  }

  int identical = 0;
  const char* artifacts[] = {".ckpt", ".pred.tsv", ".scores.csv",
                             ".refined.tsv", ".report.csv"};
  for (const char* suffix : artifacts)
    if (!slurp(dir / ("a" + std::string(suffix))).empty() &&
        slurp(dir / ("a" + std::string(suffix))) ==
            slurp(dir / ("b" + std::string(suffix))))
      ++identical;

  CheckResult r;
  r.ok = commands_ok && identical == 5;
  r.detail = fmt("pipeline commands %s; %d/5 artifacts byte-identical "
                 "(checkpoint, predictions, scores, refined, report)",
                 commands_ok ? "succeeded" : "FAILED", identical);
  return r;
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    CheckResult (*run)();
  };
  const Check checks[] = {
      {"loss-gradients-match-finite-differences", check_gradients},
      {"attention-rows-normalized-and-zero-sublayer-identity",
       check_attention},
      {"desk-model-overfits-separable-posters", check_overfit},
      {"count-refinement-matches-brute-force", check_refinement},
      {"balanced-accuracy-and-f-measure-identities", check_metric_identities},
      {"cooccurrence-tables-match-set-counting", check_cooccurrence},
      {"weight-search-matches-exhaustive-scan", check_ensemble},
      {"hamming-and-hit-ratio-fixtures", check_loss_definitions},
      {"pipeline-byte-reproducibility", check_reproducibility},
  };

  int failed = 0;
  int index = 0;
  for (const Check& check : checks) {
    ++index;
    CheckResult result;
    try {
      result = check.run();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = std::string("exception: ") + e.what();
    }
    if (!result.ok) ++failed;
    std::printf("%s %d %s (%s)\n", result.ok ? "PASS" : "FAIL", index,
                check.name, result.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
