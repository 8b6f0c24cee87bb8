#include <gtest/gtest.h>

#include <cmath>

#include "fedse/errors.hpp"
#include "fedse/nn.hpp"
#include "support.hpp"

using namespace fedse;
using namespace fedse::nn;

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Dense reference: W·x + b + (α/r)(B·A)·x with the product formed explicitly.
std::vector<double> dense_reference(const DenseLayer& layer, const LoraPair& lora, double scale,
                                    const std::vector<double>& x) {
  const Matrix ba = matmul(lora.b, lora.a);
  std::vector<double> y(layer.weight.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    long double acc = layer.bias[i];
    for (std::size_t j = 0; j < x.size(); ++j)
      acc += (static_cast<long double>(layer.weight(i, j)) + scale * ba(i, j)) * x[j];
    y[i] = static_cast<double>(acc);
  }
  return y;
}

}  // namespace

TEST(LoraLinear, ZeroBIsIdentityOnBase) {
  Rng rng(1);
  DenseLayer layer{test::random_matrix(3, 5, rng), {0.1, -0.2, 0.3}};
  LoraPair lora{test::random_matrix(2, 5, rng), Matrix(3, 2)};
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto y = lora_linear_forward(x, layer, lora, 4.0);
  std::vector<double> base = layer.bias;
  multiply_add(layer.weight, x, base);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], base[i]);
}

TEST(LoraLinear, IdentityComposition) {
  DenseLayer layer{Matrix(3, 3), {0, 0, 0}};
  LoraPair lora{Matrix::identity_embedding(2, 3), Matrix::identity_embedding(3, 2)};
  const auto y = lora_linear_forward(std::vector<double>{1, 0, 0}, layer, lora, 1.0);
  EXPECT_EQ(y, (std::vector<double>{1, 0, 0}));
}

TEST(LoraLinear, MatchesDenseReference) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    DenseLayer layer{test::random_matrix(4, 4, rng), {}};
    for (int i = 0; i < 4; ++i) layer.bias.push_back(rng.normal(0, 1));
    LoraPair lora{test::random_matrix(2, 4, rng), test::random_matrix(4, 2, rng)};
    std::vector<double> x;
    for (int i = 0; i < 4; ++i) x.push_back(rng.normal(0, 1));
    const double scale = 3.0 / 2.0;
    const auto y = lora_linear_forward(x, layer, lora, scale);
    const auto ref = dense_reference(layer, lora, scale, x);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(LoraLinear, DimensionMismatchThrows) {
  DenseLayer layer{Matrix(2, 3), {0, 0}};
  LoraPair lora{Matrix(1, 3), Matrix(2, 1)};
  EXPECT_THROW(lora_linear_forward(std::vector<double>{1, 2}, layer, lora, 1.0), ContractViolation);
}

TEST(MaskedSoftmax, UniformAndRenormalized) {
  const std::vector<double> logits{0.3, 0.3, 0.3, 0.3};
  const auto p = masked_softmax(logits, ActionMask{1, 1, 1, 1});
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto q = masked_softmax(logits, ActionMask{1, 0, 1, 0});
  EXPECT_EQ(q, (std::vector<double>{0.5, 0.0, 0.5, 0.0}));
}

TEST(MaskedSoftmax, AllFalseMaskThrows) {
  EXPECT_THROW(masked_softmax(std::vector<double>{1, 2}, ActionMask{0, 0}), ContractViolation);
}

TEST(MaskedSoftmax, MatchesExtendedPrecisionOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits;
    ActionMask mask;
    for (int i = 0; i < 12; ++i) {
      logits.push_back(rng.normal(0.0, 5.0));
      mask.push_back(rng.uniform() < 0.6);
    }
    mask[rng.below(12)] = 1;
    const auto p = masked_softmax(logits, mask);
    long double z = 0;
    for (int i = 0; i < 12; ++i)
      if (mask[i]) z += std::exp(static_cast<long double>(logits[i]));
    double sum = 0.0;
    for (int i = 0; i < 12; ++i) {
      if (!mask[i]) {
        EXPECT_EQ(p[i], 0.0);
        continue;
      }
      EXPECT_NEAR(p[i], static_cast<double>(std::exp(static_cast<long double>(logits[i])) / z), 1e-14);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(PolicyNet, ForwardWithFreshAdapterEqualsBase) {
  Rng rng(4);
  auto base = test::random_base(6, 5, 4, rng);
  const PolicyNet bare(base, LoraAdapter::zeros(base->schema(), 2, 4.0));
  const PolicyNet fresh(base, init_adapter(base->schema(), 2, 4.0, 99));
  std::vector<double> x{0.1, -1, 2, 0.5, 0, 1};
  EXPECT_EQ(bare.forward(x, ActionMask{1, 1, 0, 1}), fresh.forward(x, ActionMask{1, 1, 0, 1}));
}

TEST(PolicyNet, WrongFeatureDimensionThrows) {
  Rng rng(5);
  auto base = test::random_base(6, 5, 4, rng);
  const PolicyNet net(base, init_adapter(base->schema(), 2, 4.0, 1));
  EXPECT_THROW(net.forward(std::vector<double>(5, 0.0), ActionMask{1, 1, 1, 1}), ContractViolation);
}

TEST(NllLoss, UniformPolicyAnalytic) {
  // Zero weights give equal logits.
  std::vector<DenseLayer> layers{{Matrix(3, 2), {0, 0, 0}}, {Matrix(3, 3), {0, 0, 0}},
                                 {Matrix(4, 3), {0, 0, 0, 0}}};
  auto base = std::make_shared<const BaseModel>(std::move(layers));
  const PolicyNet net(base, LoraAdapter::zeros(base->schema(), 1, 1.0));
  Trajectory t;
  for (ActionId a : {0u, 3u, 1u}) t.steps.push_back({{0.5, -0.5}, ActionMask{1, 1, 1, 1}, a});
  const std::vector<Trajectory> batch{t};
  EXPECT_NEAR(nll_loss(net, batch), 3.0 * std::log(4.0), 1e-12);
}

TEST(NllLoss, PerfectFitIsZero) {
  std::vector<DenseLayer> layers{{Matrix(2, 2), {0, 0}}, {Matrix(2, 2), {0, 0}},
                                 {Matrix(2, 2), {0, 0}}};
  auto base = std::make_shared<const BaseModel>(std::move(layers));
  const PolicyNet net(base, LoraAdapter::zeros(base->schema(), 1, 1.0));
  Trajectory t;
  t.steps.push_back({{1, 0}, ActionMask{0, 1}, 1});
  t.steps.push_back({{0, 1}, ActionMask{1, 0}, 0});
  const std::vector<Trajectory> batch{t};
  EXPECT_EQ(nll_loss(net, batch), 0.0);
  const auto g = backward_adapter(net, batch);
  for (const auto& p : g.grads.layers) {
    for (double v : p.a.data()) EXPECT_EQ(v, 0.0);
    for (double v : p.b.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(NllLoss, MatchesStepReplay) {
  Rng rng(6);
  auto base = test::random_base(5, 6, 7, rng);
  const PolicyNet net(base, test::random_adapter(base->schema(), 3, 6.0, rng));
  const auto batch = test::random_batch(5, 5, 7, 4, rng);
  long double total = 0;
  for (const auto& t : batch)
    for (const auto& s : t.steps) total -= std::log(static_cast<long double>(net.forward(s.features, s.mask)[s.action]));
  EXPECT_NEAR(nll_loss(net, batch), static_cast<double>(total / 5), 1e-10);
}

TEST(NllLoss, EmptyBatchAndIllegalActionThrow) {
  Rng rng(7);
  auto base = test::random_base(3, 4, 3, rng);
  const PolicyNet net(base, LoraAdapter::zeros(base->schema(), 1, 1.0));
  EXPECT_THROW(nll_loss(net, std::span<const Trajectory>{}), ContractViolation);
  Trajectory t;
  t.steps.push_back({{1, 2, 3}, ActionMask{1, 0, 1}, 1});
  const std::vector<Trajectory> batch{t};
  EXPECT_THROW(nll_loss(net, batch), ContractViolation);
}

// Central differences on every adapter entry.
TEST(BackwardAdapter, MatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d_in = 2 + rng.below(15), hidden = 2 + rng.below(6), vocab = 2 + rng.below(5);
    const std::size_t rank = 1 + rng.below(4);
    auto base = test::random_base(d_in, hidden, vocab, rng);
    PolicyNet net(base, test::random_adapter(base->schema(), rank, 2.0 * static_cast<double>(rank), rng));
    const auto batch = test::random_batch(1 + rng.below(3), d_in, vocab, 3, rng);
    const auto analytic = backward_adapter(net, batch).grads;
    for (std::size_t l = 0; l < analytic.layers.size(); ++l) {
      for (bool is_a : {true, false}) {
        const Matrix& g = is_a ? analytic.layers[l].a : analytic.layers[l].b;
        for (std::size_t i = 0; i < g.size(); ++i) {
          auto& param = is_a ? net.adapter().layers()[l].a : net.adapter().layers()[l].b;
          const double saved = param.data()[i];
          param.data()[i] = saved + 1e-5;
          const double up = nll_loss(net, batch);
          param.data()[i] = saved - 1e-5;
          const double down = nll_loss(net, batch);
          param.data()[i] = saved;
          const double fd = (up - down) / 2e-5;
          if (std::abs(fd - g.data()[i]) > 1e-8) {
            EXPECT_LT(relative_error(fd, g.data()[i]), 1e-4) << "trial " << trial << " layer " << l;
          }
        }
      }
    }
  }
}

TEST(BackwardAdapter, DuplicatedBatchGivesSameGradient) {
  Rng rng(9);
  auto base = test::random_base(4, 5, 3, rng);
  const PolicyNet net(base, test::random_adapter(base->schema(), 2, 4.0, rng));
  auto batch = test::random_batch(3, 4, 3, 3, rng);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto g1 = backward_adapter(net, batch).grads;
  const auto g2 = backward_adapter(net, doubled).grads;
  for (std::size_t l = 0; l < g1.layers.size(); ++l)
    for (std::size_t i = 0; i < g1.layers[l].a.size(); ++i)
      EXPECT_NEAR(g1.layers[l].a.data()[i], g2.layers[l].a.data()[i], 1e-14);
}

TEST(BackwardAdapter, BaseIsNeverModified) {
  Rng rng(10);
  auto base = test::random_base(4, 5, 3, rng);
  const auto before = base->content_hash();
  PolicyNet net(base, test::random_adapter(base->schema(), 2, 4.0, rng));
  const auto batch = test::random_batch(4, 4, 3, 3, rng);
  OptimizerState opt;
  for (int i = 0; i < 10; ++i) optimizer_step(net.adapter(), backward_adapter(net, batch).grads, opt, 0.05);
  EXPECT_EQ(base->content_hash(), before);
}

TEST(Optimizer, ArithmeticAndZeroGradient) {
  LoraAdapter a(1, 1.0, {LoraPair{Matrix::from_rows({{1.0}}), Matrix::from_rows({{0.0}})}});
  AdapterGradients g{{LoraPair{Matrix::from_rows({{2.0}}), Matrix::from_rows({{0.0}})}}};
  OptimizerState opt;
  const auto unchanged = a;
  optimizer_step(a, AdapterGradients::zeros_like(a), opt, 0.1);
  EXPECT_EQ(a, unchanged);
  optimizer_step(a, g, opt, 0.1);
  EXPECT_DOUBLE_EQ(a.layers()[0].a(0, 0), 0.8);
}

TEST(Optimizer, SgdStepsAreLinear) {
  Rng rng(11);
  const std::vector<LayerShape> schema{{3, 4}, {2, 3}};
  auto a1 = test::random_adapter(schema, 2, 2.0, rng);
  auto a2 = a1;
  auto g1 = AdapterGradients::zeros_like(a1), g2 = g1, sum = g1;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < g1.layers[l].a.size(); ++i) {
      g1.layers[l].a.data()[i] = rng.normal(0, 1);
      g2.layers[l].a.data()[i] = rng.normal(0, 1);
      sum.layers[l].a.data()[i] = g1.layers[l].a.data()[i] + g2.layers[l].a.data()[i];
    }
  OptimizerState s1, s2;
  optimizer_step(a1, g1, s1, 0.1);
  optimizer_step(a1, g2, s1, 0.1);
  optimizer_step(a2, sum, s2, 0.1);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < a1.layers()[l].a.size(); ++i)
      EXPECT_NEAR(a1.layers()[l].a.data()[i], a2.layers()[l].a.data()[i], 1e-15);
}

TEST(Optimizer, NonFiniteGradientThrows) {
  LoraAdapter a(1, 1.0, {LoraPair{Matrix::from_rows({{1.0}}), Matrix::from_rows({{0.0}})}});
  AdapterGradients g{{LoraPair{Matrix::from_rows({{NAN}}), Matrix::from_rows({{0.0}})}}};
  OptimizerState opt;
  EXPECT_THROW(optimizer_step(a, g, opt, 0.1), NumericalError);
}

TEST(Optimizer, LossNonIncreasingOverFiftySteps) {
  Rng rng(12);
  auto base = test::random_base(6, 8, 5, rng);
  PolicyNet net(base, init_adapter(base->schema(), 4, 8.0, 3));
  const auto batch = test::random_batch(4, 6, 5, 3, rng);
  OptimizerState opt;
  double prev = nll_loss(net, batch);
  for (int i = 0; i < 50; ++i) {
    optimizer_step(net.adapter(), backward_adapter(net, batch).grads, opt, 1e-2);
    const double loss = nll_loss(net, batch);
    EXPECT_LE(loss, prev + 1e-9) << "step " << i;
    prev = loss;
  }
}

TEST(InitAdapter, DeterministicAndSeedSensitive) {
  const std::vector<LayerShape> schema{{8, 10}, {8, 8}, {4, 8}};
  const auto a = init_adapter(schema, 3, 6.0, 42);
  EXPECT_EQ(a, init_adapter(schema, 3, 6.0, 42));
  EXPECT_NE(a.layers()[0].a, init_adapter(schema, 3, 6.0, 43).layers()[0].a);
  for (const auto& p : a.layers())
    for (double v : p.b.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(init_adapter(schema, 0, 1.0, 1), ContractViolation);
}

TEST(InitAdapter, EntriesLookLikeTheConfiguredGaussian) {
  const std::vector<LayerShape> schema{{200, 200}};
  const auto a = init_adapter(schema, 16, 16.0, 7);
  double sum = 0, sq = 0;
  for (double v : a.layers()[0].a.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(a.layers()[0].a.size());
  EXPECT_NEAR(sum / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(sq / n), kLoraInitStd, 0.001);
}

TEST(ZeroAdapter, LossEqualsBareBase) {
  Rng rng(13);
  auto base = test::random_base(5, 6, 4, rng);
  const auto batch = test::random_batch(3, 5, 4, 4, rng);
  const PolicyNet fresh(base, init_adapter(base->schema(), 2, 4.0, 5));
  const PolicyNet zero(base, LoraAdapter::zeros(base->schema(), 2, 4.0));
  EXPECT_NEAR(nll_loss(fresh, batch), nll_loss(zero, batch), 1e-12);
}
