// Throughput benchmarks for the hot paths: dense matrix products, a single
// encoder block, the full desk-scale poster model (forward only and
// forward+backward), and genre-count refinement.

#include <benchmark/benchmark.h>

#include <set>
#include <string>
#include <vector>

#include "rdt/model.hpp"
#include "rdt/refine.hpp"
#include "rdt/rng.hpp"
#include "rdt/tensor.hpp"
#include "rdt/train.hpp"

namespace {

rdt::Tensor random_tensor(rdt::Rng& rng, std::vector<int> shape, double lo,
                          double hi) {
  rdt::Tensor x = rdt::Tensor::zeros(std::move(shape));
  for (double& v : x.mutable_data()) v = rng.uniform(lo, hi);
  return x;
}

void BM_MatMul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  rdt::Rng rng(1);
  const rdt::Tensor a = random_tensor(rng, {n, n}, -1.0, 1.0);
  const rdt::Tensor b = random_tensor(rng, {n, n}, -1.0, 1.0);
  for (auto _ : state) {
    const rdt::Tensor c = rdt::matmul(a, b);
    benchmark::DoNotOptimize(c.at(0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n) * n *
                          n);
}
BENCHMARK(BM_MatMul)->Arg(32)->Arg(64)->Arg(128);

void BM_EncoderBlock(benchmark::State& state) {
  // Desk-scale token geometry: 17 tokens of width 32, 4 heads of width 8.
  const int t = 17, d = 32, heads = 4, head_dim = 8;
  rdt::Rng rng(2);
  rdt::EncoderParams enc;
  enc.norm1_gain = random_tensor(rng, {d}, 0.9, 1.1);
  enc.norm1_bias = random_tensor(rng, {d}, -0.1, 0.1);
  enc.norm2_gain = random_tensor(rng, {d}, 0.9, 1.1);
  enc.norm2_bias = random_tensor(rng, {d}, -0.1, 0.1);
  enc.attention.heads = heads;
  for (int h = 0; h < heads; ++h) {
    enc.attention.query.push_back(random_tensor(rng, {d, head_dim}, -0.3, 0.3));
    enc.attention.key.push_back(random_tensor(rng, {d, head_dim}, -0.3, 0.3));
    enc.attention.value.push_back(random_tensor(rng, {d, head_dim}, -0.3, 0.3));
  }
  enc.attention.output =
      random_tensor(rng, {heads * head_dim, d}, -0.3, 0.3);
  enc.mlp_w1 = random_tensor(rng, {d, 2 * d}, -0.3, 0.3);
  enc.mlp_b1 = random_tensor(rng, {2 * d}, -0.1, 0.1);
  enc.mlp_w2 = random_tensor(rng, {2 * d, d}, -0.3, 0.3);
  enc.mlp_b2 = random_tensor(rng, {d}, -0.1, 0.1);
  const rdt::Tensor z = random_tensor(rng, {t, d}, -1.0, 1.0);
  for (auto _ : state) {
    const rdt::Tensor out = rdt::encoder_block(z, enc);
    benchmark::DoNotOptimize(out.at(0));
  }
}
BENCHMARK(BM_EncoderBlock);

const rdt::Model& desk_model() {
  static const rdt::Model model(rdt::ModelConfig{},
                                rdt::GenreVocabulary::imdb13(), 5);
  return model;
}

rdt::Tensor desk_image() {
  rdt::Rng rng(6);
  return random_tensor(rng, {64, 64, 3}, 0.0, 1.0);
}

void BM_PosterForward(benchmark::State& state) {
  const rdt::Model& model = desk_model();
  const rdt::Tensor image = desk_image();
  for (auto _ : state) {
    const rdt::Tensor scores = model.forward(image);
    benchmark::DoNotOptimize(scores.at(0));
  }
}
BENCHMARK(BM_PosterForward);

void BM_PosterForwardBackward(benchmark::State& state) {
  const rdt::Model& model = desk_model();
  const rdt::Tensor image = desk_image();
  const std::vector<rdt::MultiHotLabel> labels = {
      rdt::MultiHotLabel::from_ids({2, 7}, 13)};
  for (auto _ : state) {
    const rdt::Tensor loss = rdt::asl_loss(
        rdt::reshape(model.forward(image), {1, 13}), labels, rdt::AslConfig{});
    rdt::backward(loss);
    benchmark::DoNotOptimize(loss.item());
    for (rdt::Tensor& p : model.parameters()) p.zero_grad();
  }
}
BENCHMARK(BM_PosterForwardBackward);

void BM_RefinePrediction(benchmark::State& state) {
  const int delta = 13;
  rdt::Rng rng(7);
  rdt::PosterManifest m;
  for (int i = 0; i < 200; ++i) {
    std::set<int> ids;
    const int want = 1 + static_cast<int>(rng.index(3));
    while (static_cast<int>(ids.size()) < want)
      ids.insert(1 + static_cast<int>(rng.index(delta)));
    rdt::PosterRecord rec;
    rec.path = "p" + std::to_string(i);
    rec.movie_id = "m" + std::to_string(i);
    rec.label = rdt::MultiHotLabel::from_ids(
        std::vector<int>(ids.begin(), ids.end()), delta);
    m.records.push_back(std::move(rec));
  }
  std::vector<std::size_t> all(m.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const rdt::ConditionalTables tables =
      rdt::build_conditional_tables(rdt::compute_cooccurrence(m, all));
  std::vector<rdt::ConfidenceVector> rhos(1024);
  for (rdt::ConfidenceVector& rho : rhos)
    for (int g = 0; g < delta; ++g)
      rho.scores.push_back(rng.uniform(0.001, 0.999));
  const rdt::RefineConfig cfg;
  std::size_t next = 0;
  for (auto _ : state) {
    const rdt::GenrePrediction pred =
        rdt::refine_prediction(rhos[next], tables, cfg);
    benchmark::DoNotOptimize(pred.genres.data());
    next = (next + 1) & 1023;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RefinePrediction);

}  // namespace

BENCHMARK_MAIN();
