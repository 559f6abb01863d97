// Parallel kernels against their serial references, plus end-to-end
// training steps of the toy network.

#include <benchmark/benchmark.h>

#include <vector>

#include "gatta/attention.hpp"
#include "gatta/kernels.hpp"
#include "gatta/ops.hpp"
#include "gatta/optim.hpp"

using namespace gatta;
using kernels::Trans;

namespace {

std::vector<real> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<real> v(n);
  for (real& x : v) x = static_cast<real>(uniform(rng, -1, 1));
  return v;
}

template <bool Reference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<real> c(n * n);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::gemm(Trans::no, Trans::no, n, n, n, a.data(), n, b.data(), n, 0, c.data(), n);
    else
      kernels::gemm(Trans::no, Trans::no, n, n, n, a.data(), n, b.data(), n, 0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Arg(128);

// conv2 of the toy model: 16x16x32 -> 64 channels.
template <bool Reference>
void BM_Conv(benchmark::State& state) {
  const kernels::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 16, 16, 32, 64};
  const auto in = random_vector(g.batch * 16 * 16 * 32, 3);
  const auto k = random_vector(9 * 32 * 64, 4);
  const std::vector<real> bias(64, real(0.1));
  std::vector<real> out(g.rows() * 64), cols(g.rows() * g.patch());
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv2d_forward(g, in.data(), k.data(), bias.data(), out.data());
    else
      kernels::conv2d_forward(g, in.data(), k.data(), bias.data(), out.data(), cols.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * g.rows() * g.patch() * 64,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv<false>)->Arg(8)->Arg(128);
BENCHMARK(BM_Conv<true>)->Arg(8);

template <bool Reference>
void BM_MaxPool(benchmark::State& state) {
  const std::size_t b = 64, h = 32, w = 32, c = 32;
  const auto in = random_vector(b * h * w * c, 5);
  std::vector<real> out(b * h * w * c / 4);
  std::vector<std::uint32_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::maxpool2x2_forward(b, h, w, c, in.data(), out.data());
    else
      kernels::maxpool2x2_forward(b, h, w, c, in.data(), out.data(), arg.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MaxPool<false>);
BENCHMARK(BM_MaxPool<true>);

Tensor random_images(std::size_t b) {
  Tensor t({b, 32, 32, 3});
  Rng rng(7);
  for (real& v : t.data()) v = static_cast<real>(uniform01(rng));
  return t;
}

void BM_PretrainStep(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  BackboneModel model = BackboneModel::build({}, 1);
  const Tensor images = random_images(b);
  std::vector<int> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % 10);
  Rng rng(3);
  for (auto _ : state) {
    Tape tape;
    BoundBackbone net = bind(tape, model, true);
    auto out = forward(net, tape.constant_ref(images), nullptr, ForwardOptions{true, &rng, false});
    Var loss = softmax_cross_entropy(out.logits, labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(net.params[0]));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b));
}
BENCHMARK(BM_PretrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_AttentionStep(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  BackboneModel model = BackboneModel::build({}, 1);
  const auto layers = model.layers();
  AttentionParams params = AttentionParams::init(layers, 16, 2);
  const Tensor images = random_images(b);
  std::vector<int> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % 10);
  Rng rng(3);
  for (auto _ : state) {
    Tape tape;
    BoundBackbone net = bind(tape, model, false);
    BoundAttention att = bind(tape, params, true);
    RunOptions options;
    options.training = true;
    options.rng = &rng;
    auto out = run(net, att, tape.constant_ref(images), options);
    Var loss = softmax_cross_entropy(out.logits, labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(att.layers[0].alpha));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b));
}
BENCHMARK(BM_AttentionStep)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  BackboneModel model = BackboneModel::build({}, 1);
  const Tensor images = random_images(b);
  for (auto _ : state) {
    Tape tape;
    auto out = forward(bind(tape, model, false), tape.constant_ref(images), nullptr);
    benchmark::DoNotOptimize(out.logits.value().raw());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b));
}
BENCHMARK(BM_Inference)->Arg(250)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_runtime();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
