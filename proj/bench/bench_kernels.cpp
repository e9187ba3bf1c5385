// SPDX-License-Identifier: Apache-2.0
// Times each hot kernel with the serial reference and the OpenMP path, checks
// that both produce identical output, and prints one CSV row per kernel.

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "pairsel/kernels.hpp"
#include "pairsel/vlad.hpp"

using namespace pairsel;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Matrix m(n, d);
  for (float& v : m.data) v = u(rng);
  return m;
}

double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

template <class Run>
void row(const char* name, int reps, Run run) {
  decltype(run(Exec::serial)) s, p;
  const double ts = best_of(reps, [&] { s = run(Exec::serial); });
  const double tp = best_of(reps, [&] { p = run(Exec::parallel); });
  std::printf("%s,%.4f,%.4f,%.2f,%s\n", name, ts, tp, ts / tp, s == p ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel timings"};
  std::size_t points = 50000, k = 256, images = 200, features = 400;
  int reps = 3;
  app.add_option("--points", points, "descriptor rows for assignment and accumulation");
  app.add_option("--k", k, "codebook size");
  app.add_option("--images", images, "images for VLAD aggregation");
  app.add_option("--features", features, "features per image");
  app.add_option("--reps", reps, "repetitions; the best time is reported");
  CLI11_PARSE(app, argc, argv);

  const Matrix x = random_matrix(points, kDescriptorDim, 1);
  const Matrix centers = random_matrix(k, kDescriptorDim, 2);
  const Matrix a = random_matrix(2000, kDescriptorDim, 3), b = random_matrix(2000, kDescriptorDim, 4);
  const Matrix base = random_matrix(5000, 1024, 5), queries = random_matrix(200, 1024, 6);
  std::vector<std::uint64_t> ids(base.rows);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto labels = kernels::assign_nearest(x, centers, Exec::serial).labels;

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ub(0, 255);
  std::vector<DescriptorSet> sets(images);
  for (std::size_t i = 0; i < images; ++i) {
    sets[i].image_id = i;
    sets[i].image_width = sets[i].image_height = 100;
    sets[i].features.resize(features);
    for (LocalFeature& f : sets[i].features) {
      f.descriptor.resize(kDescriptorDim);
      for (auto& v : f.descriptor) v = static_cast<std::uint8_t>(ub(rng));
    }
  }
  Codebook cb;
  cb.centers = centers;

  std::printf("# threads %d\n", omp_get_max_threads());
  std::printf("kernel,serial_s,parallel_s,speedup,identical\n");
  row("assign_nearest", reps, [&](Exec e) {
    const auto r = kernels::assign_nearest(x, centers, e);
    return std::make_pair(r.labels, r.dist2);
  });
  row("accumulate_clusters", reps, [&](Exec e) {
    const auto r = kernels::accumulate_clusters(x, labels, k, e);
    return std::make_pair(r.sums, r.counts);
  });
  row("two_nearest_both_ways", reps, [&](Exec e) {
    const auto r = kernels::two_nearest_both_ways(a, b, e);
    std::vector<std::uint32_t> out;
    for (const auto& t : r.a_to_b) out.push_back(t.best);
    for (const auto& t : r.b_to_a) out.push_back(t.best);
    return out;
  });
  row("exhaustive_knn_batch", reps, [&](Exec e) { return kernels::exhaustive_knn_batch(base, ids, queries, 300, e); });
  row("batch_aggregate", reps, [&](Exec e) { return batch_aggregate(sets, cb, e); });
  return 0;
}
