#include <gtest/gtest.h>

#include "alloc_hook.hpp"
#include "kanslu/autodiff/ops.hpp"
#include "kanslu/autodiff/tape.hpp"
#include "kanslu/kan/kan_layer.hpp"
#include "kanslu/random.hpp"

namespace kanslu::basis {
void PrintTo(Family family, std::ostream* os) { *os << to_string(family); }
}  // namespace kanslu::basis

using namespace kanslu;
using kanslu::testing::AllocProbe;

namespace {

constexpr std::size_t kBatch = 64, kIn = 256, kOut = 256;
constexpr std::size_t kEdgeBytes = kBatch * kIn * kOut * sizeof(double);

ad::Tensor random_input(Rng& rng) {
  ad::Tensor x({kBatch, kIn});
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (double& v : x.data()) v = u(rng);
  return x;
}

}  // namespace

class KanMemory : public ::testing::TestWithParam<basis::Family> {};

TEST_P(KanMemory, ForwardStaysBelowEdgeTensor) {
  Rng rng(1);
  basis::BasisSpec spec;
  spec.family = GetParam();
  kan::KanLayer layer(kIn, kOut, spec, rng);
  const ad::Tensor input = random_input(rng);
  ad::Tape tape;
  ad::Var x = tape.constant(input);
  kanslu::testing::AllocStats stats;
  ad::Var y;
  {
    AllocProbe probe;
    y = kan::kan_forward(tape, layer, x);
    stats = probe.stats();
  }
  ASSERT_EQ(tape.value(y).shape(), (ad::Shape{kBatch, kOut}));
  tape.backward(ad::sum(y));
  // Expected scale: B·I·n_basis + B·O doubles.
  const std::size_t linear_bytes = (kBatch * kIn * (spec.num_basis() + 1) + kBatch * kOut) * sizeof(double);
  RecordProperty("forward_peak_bytes", std::to_string(stats.peak));
  EXPECT_LT(stats.largest, kEdgeBytes / 8) << "largest single allocation";
  EXPECT_LT(stats.peak, kEdgeBytes / 4) << "peak live bytes during forward";
  EXPECT_LT(stats.peak, 4 * linear_bytes + (1u << 20)) << "peak exceeds O(B·I·n_basis + B·O)";
}

INSTANTIATE_TEST_SUITE_P(Families, KanMemory,
                         ::testing::Values(basis::Family::BSpline, basis::Family::Chebyshev, basis::Family::Rbf,
                                           basis::Family::Rswaf, basis::Family::GrKan),
                         [](const auto& info) { return std::string(basis::to_string(info.param)); });

TEST(KanMemoryHook, NaiveOracleTripsTheHook) {
  Rng rng(2);
  kan::KanLayer layer(kIn, kOut, basis::BasisSpec{}, rng);
  const ad::Tensor input = random_input(rng);
  AllocProbe probe;
  const ad::Tensor y = kan::kan_forward_naive(layer, input);
  EXPECT_GE(probe.stats().peak, kEdgeBytes);
}
