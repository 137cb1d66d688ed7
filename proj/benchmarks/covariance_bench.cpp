// Micro-benchmarks for the covariance operator realizations and the
// atomistic force kernel: the per-apply costs these measure are what decides
// between dense, block, and low-rank metrics at a given system size.

#include <benchmark/benchmark.h>

#include "saddlekit/covariance.hpp"
#include "saddlekit/eam.hpp"
#include "saddlekit/potentials.hpp"
#include "saddlekit/rng.hpp"

using namespace saddlekit;

namespace {

Mat random_psd(int d, rng::CounterStream& stream) {
  Mat A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = stream.next_normal();
  Mat S = A * A.transpose() / d;
  S.diagonal().array() += 0.1;
  return S;
}

cov::CovarianceOperator make_operator(const std::string& kind, int d,
                                      rng::CounterStream& stream) {
  if (kind == "dense") return cov::CovarianceOperator::dense(random_psd(d, stream));
  if (kind == "diagonal") {
    return cov::CovarianceOperator::diagonal(stream.normals(d).cwiseAbs());
  }
  if (kind == "block") {
    std::vector<cov::CovBlock> blocks;
    for (int a = 0; a + 3 <= d; a += 3) {
      blocks.push_back({{a, a + 1, a + 2}, random_psd(3, stream)});
    }
    return cov::CovarianceOperator::block_local(d, std::move(blocks));
  }
  const int r = 16;
  Mat U(d, r);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < r; ++j) U(i, j) = stream.next_normal();
  return cov::CovarianceOperator::low_rank(U, random_psd(r, stream));
}

void bench_apply_sigma(benchmark::State& state, const std::string& kind) {
  rng::CounterStream stream(1);
  const int d = static_cast<int>(state.range(0));
  auto op = make_operator(kind, d, stream);
  Vec z = stream.normals(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cov::apply_sigma(op, z));
  }
}

void bench_apply_metric(benchmark::State& state, const std::string& kind) {
  rng::CounterStream stream(2);
  const int d = static_cast<int>(state.range(0));
  auto op = make_operator(kind, d, stream);
  cov::MetricParams p;
  p.lambda = 0.02;
  Vec z = stream.normals(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cov::apply_metric(op, p, z));
  }
}

void bench_metric_reuse(benchmark::State& state, const std::string& kind) {
  // Factorizations amortized across applies within one iteration.
  rng::CounterStream stream(3);
  const int d = static_cast<int>(state.range(0));
  auto op = make_operator(kind, d, stream);
  cov::MetricParams p;
  p.lambda = 0.02;
  cov::Metric metric(op, p);
  Vec z = stream.normals(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metric.apply(z));
  }
}

void bench_logdet(benchmark::State& state, const std::string& kind) {
  rng::CounterStream stream(4);
  const int d = static_cast<int>(state.range(0));
  auto op = make_operator(kind, d, stream);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cov::logdet(op, 0.02));
  }
}

void bench_eam_forces(benchmark::State& state) {
  pot::EamFsTables tables = pot::synthetic_tungsten_fs();
  auto vac = pot::build_vacancy_supercell(static_cast<int>(state.range(0)),
                                          tables.elements[0].lattice_constant, "W");
  pot::EamPotential pw(tables, vac.cell);
  Vec x = vac.cell.flatten();
  for (auto _ : state) {
    benchmark::DoNotOptimize(pw.energy_gradient(x));
  }
}

void bench_oracle_sample(benchmark::State& state) {
  pot::EamFsTables tables = pot::synthetic_tungsten_fs();
  auto vac = pot::build_vacancy_supercell(4, tables.elements[0].lattice_constant, "W");
  pot::EamPotential pw(tables, vac.cell);
  const Vec3 mig = vac.cell.positions[vac.migrating_atom];
  pot::CoreField3D::Params core;
  core.midpoint = 0.5 * (vac.vacancy_site + mig);
  core.hop_axis = vac.vacancy_site - mig;
  core.hop_length = core.hop_axis.norm();
  core.cell = vac.cell.cell;
  pot::CoreField3D field(core);
  field.set_natoms(vac.cell.natoms());
  pot::StochasticForceOracle oracle(pw, field, 1.0, 7);
  Vec x = vac.cell.flatten();
  std::uint64_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle.sample_force(x, {1, k++, 0}));
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_apply_sigma, dense, "dense")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_sigma, diagonal, "diagonal")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_sigma, block, "block")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_sigma, low_rank, "lowrank")->Arg(48)->Arg(384);

BENCHMARK_CAPTURE(bench_apply_metric, dense, "dense")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_metric, diagonal, "diagonal")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_metric, block, "block")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_apply_metric, low_rank, "lowrank")->Arg(48)->Arg(384);

BENCHMARK_CAPTURE(bench_metric_reuse, dense, "dense")->Arg(384);
BENCHMARK_CAPTURE(bench_metric_reuse, block, "block")->Arg(384);

BENCHMARK_CAPTURE(bench_logdet, dense, "dense")->Arg(48)->Arg(384);
BENCHMARK_CAPTURE(bench_logdet, block, "block")->Arg(384);
BENCHMARK_CAPTURE(bench_logdet, low_rank, "lowrank")->Arg(384);

BENCHMARK(bench_eam_forces)->Arg(3)->Arg(4);
BENCHMARK(bench_oracle_sample);

BENCHMARK_MAIN();
