// Serial reference kernels vs the OpenMP kernels, plus end-to-end encode
// throughput on a DistilBERT-sized random model.
//
//   bench_kernels [--reps N] [--threads N]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "axir/kernels_serial.hpp"
#include "axir/model.hpp"
#include "axir/tensor.hpp"
#include "axir/toyforge.hpp"

using namespace axir;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& x : t.data()) x = u(rng);
  return t;
}

// Median wall time in milliseconds.
double time_ms(int reps, const std::function<void()>& fn) {
  std::vector<double> ms;
  fn();
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count());
  }
  std::sort(ms.begin(), ms.end());
  return ms[ms.size() / 2];
}

void row(const std::string& name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.3f %10.3f %8.2fx\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--reps") reps = std::atoi(argv[i + 1]);
    if (flag == "--threads") omp_set_num_threads(std::atoi(argv[i + 1]));
  }
  std::printf("threads: %d, reps: %d\n\n", omp_get_max_threads(), reps);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(rng, {128, 768});
  const Tensor w = random_tensor(rng, {768, 3072});
  const Tensor scores = random_tensor(rng, {12 * 128, 128});
  const Tensor g = random_tensor(rng, {768});
  const Tensor b = random_tensor(rng, {768});
  const Tensor h = random_tensor(rng, {128, 3072});

  row("matmul 128x768x3072", time_ms(reps, [&] { (void)serial::matmul(x, w); }),
      time_ms(reps, [&] { (void)matmul(x, w); }));
  row("softmax 1536x128", time_ms(reps, [&] { (void)serial::softmax_rows(scores); }),
      time_ms(reps, [&] { (void)softmax_rows(scores); }));
  row("layer_norm 128x768", time_ms(reps, [&] { (void)serial::layer_norm(x, g, b, 1e-12f); }),
      time_ms(reps, [&] { (void)layer_norm(x, g, b, 1e-12f); }));
  row("gelu 128x3072", time_ms(reps, [&] { (void)serial::gelu(h); }),
      time_ms(reps, [&] { (void)gelu(h); }));

  ModelConfig c;
  c.n_layers = 6;
  c.n_heads = 12;
  c.d_model = 768;
  c.d_head = 64;
  c.d_ff = 3072;
  c.vocab_size = 1000;
  c.max_positions = 512;
  const Model model(c, build_random_model(2, c));
  std::vector<int> ids(128);
  std::uniform_int_distribution<int> id(0, static_cast<int>(c.vocab_size) - 1);
  for (int& t : ids) t = id(rng);
  const double plain = time_ms(reps, [&] { (void)model.encode(ids, RecordSet::none()); });
  const double recorded = time_ms(reps, [&] { (void)model.encode(ids, RecordSet::all()); });
  std::printf("\nencode 6x768, 128 tokens:   %8.1f ms  (%.0f tokens/s)\n", plain,
              128.0 / (plain / 1000.0));
  std::printf("encode, all sites recorded: %8.1f ms\n", recorded);
  return 0;
}
