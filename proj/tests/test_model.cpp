#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "blocksparse/model.hpp"

using namespace blocksparse;

TEST(RngStream, SameSeedAndStreamRepeat)
{
    RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool differs_c = false, differs_d = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a();
        EXPECT_EQ(va, b());
        differs_c |= va != c();
        differs_d |= va != d();
    }
    EXPECT_TRUE(differs_c);
    EXPECT_TRUE(differs_d);
}

TEST(RngStream, TaskStreamsAreDistinct)
{
    std::set<std::uint64_t> first;
    for (std::uint64_t cell = 0; cell < 20; ++cell)
        for (std::uint64_t trial = 0; trial < 20; ++trial) first.insert(RngStream::for_task(5, cell, trial)());
    EXPECT_EQ(first.size(), 400u);
}

TEST(SphereUniform, ScalarCaseIsPlusMinusRadius)
{
    RngStream rng(1, 0);
    int plus = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto v = model::sample_sphere_uniform(1, 3.0, rng);
        ASSERT_EQ(v.size(), 1);
        EXPECT_DOUBLE_EQ(std::abs(v[0]), 3.0);
        plus += v[0] > 0 ? 1 : 0;
    }
    // Binomial(n, 1/2): 4 standard deviations.
    EXPECT_NEAR(plus / double(n), 0.5, 4.0 * 0.5 / std::sqrt(n));
}

TEST(SphereUniform, NormIsExact)
{
    RngStream rng(2, 0);
    for (int b : {1, 2, 3, 4, 8, 16})
        for (double mu : {0.5, 3.0, 10.0, 1e4})
            for (int i = 0; i < 100; ++i) EXPECT_NEAR(model::sample_sphere_uniform(b, mu, rng).norm(), mu, 1e-12 * mu);
}

TEST(SphereUniform, CoordinatesCentredAndUncorrelated)
{
    RngStream rng(3, 0);
    const int n = 100000;
    const int b = 4;
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    double cross = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto v = model::sample_sphere_uniform(b, 1.0, rng);
        mean += v;
        cross += v[0] * v[1];
    }
    mean /= n;
    for (int j = 0; j < b; ++j) EXPECT_LT(std::abs(mean[j]), 4.0 / std::sqrt(n));
    // E[x1^2 x2^2] = 1 / (B (B + 2)) on the unit sphere.
    const double se = std::sqrt(1.0 / (b * (b + 2.0)) / n);
    EXPECT_LT(std::abs(cross / n), 4.0 * se);
}

TEST(SphereUniform, RejectsBadArguments)
{
    RngStream rng(0, 0);
    EXPECT_THROW(model::sample_sphere_uniform(0, 1.0, rng), DomainError);
    EXPECT_THROW(model::sample_sphere_uniform(2, 0.0, rng), DomainError);
}

TEST(SampleSignal, ExtremeActivity)
{
    RngStream rng(4, 0);
    model::BlockPrior none{0.0, 3, model::SphereUniform{2.0}};
    const auto zero = model::sample_signal(none, 50, rng);
    EXPECT_EQ(zero.entries().squaredNorm(), 0.0);
    EXPECT_EQ(zero.dim(), 150);

    model::BlockPrior all{1.0, 3, model::SphereUniform{2.0}};
    const auto full = model::sample_signal(all, 50, rng);
    EXPECT_EQ(full.active_blocks(), 50);
    for (Index m = 0; m < 50; ++m) EXPECT_NEAR(full.block(m).norm(), 2.0, 1e-12);
}

TEST(SampleSignal, ActiveFractionWithinBinomialInterval)
{
    RngStream rng(5, 0);
    model::BlockPrior prior{0.1, 2, model::GaussianIso{1.0}};
    const Index m = 10000;
    const auto x = model::sample_signal(prior, m, rng);
    const double frac = double(x.active_blocks()) / m;
    const double half_width = 2.5758 * std::sqrt(0.1 * 0.9 / m);
    EXPECT_NEAR(frac, 0.1, half_width);
}

TEST(SampleSignal, RejectsInvalidPrior)
{
    RngStream rng(0, 0);
    EXPECT_THROW(model::sample_signal({1.5, 2, model::SphereUniform{1.0}}, 10, rng), DomainError);
    EXPECT_THROW(model::sample_signal({0.1, 0, model::SphereUniform{1.0}}, 10, rng), DomainError);
    EXPECT_THROW(model::sample_signal({0.1, 2, model::GaussianIso{-1.0}}, 10, rng), DomainError);
    EXPECT_THROW(model::sample_signal({0.1, 2, model::SphereUniform{1.0}}, 0, rng), DomainError);
}

TEST(BlockSignal, RejectsRaggedLength)
{
    EXPECT_THROW(model::BlockSignal(3, Vector::Zero(7)), DomainError);
    EXPECT_THROW(model::BlockSignal(0, Vector::Zero(4)), DomainError);
}

TEST(SampleMatrix, ColumnNormsNearOne)
{
    RngStream rng(6, 0);
    const auto a = model::sample_matrix(100, 400, rng);
    EXPECT_NEAR(a.colwise().squaredNorm().mean(), 1.0, 0.05);
}

TEST(SampleMatrix, ScalarCaseIsStandardNormal)
{
    RngStream rng(7, 0);
    RngStream ref(7, 0);
    const auto a = model::sample_matrix(1, 1, rng);
    EXPECT_EQ(a(0, 0), ref.normal());
}

TEST(SampleMatrix, Deterministic)
{
    RngStream r1(8, 3), r2(8, 3);
    const auto a = model::sample_matrix(30, 60, r1);
    const auto b = model::sample_matrix(30, 60, r2);
    EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(SampleMatrix, RejectsOversampling)
{
    RngStream rng(0, 0);
    EXPECT_THROW(model::sample_matrix(5, 4, rng), DomainError);
    EXPECT_THROW(model::sample_matrix(0, 4, rng), DomainError);
}

TEST(MakeInstance, ZeroSparsity)
{
    const auto inst = model::make_instance(0.5, 0.0, 100, 2, model::SphereUniform{10.0}, 1);
    EXPECT_EQ(inst.n, 50);
    EXPECT_EQ(inst.truth.active_blocks(), 0);
    EXPECT_EQ(inst.observations.squaredNorm(), 0.0);
    EXPECT_DOUBLE_EQ(inst.delta, 0.5);
}

TEST(MakeInstance, RoundingRule)
{
    const auto inst = model::make_instance(0.25, 0.2, 1000, 4, model::SphereUniform{10.0}, 2);
    EXPECT_EQ(inst.n, 250);
    EXPECT_EQ(inst.truth.active_blocks(), 13);
    EXPECT_EQ(inst.truth.sparsity(), 52);
    EXPECT_EQ(inst.matrix.rows(), 250);
    EXPECT_EQ(inst.matrix.cols(), 1000);
}

TEST(MakeInstance, ObservationsAreExact)
{
    const auto inst = model::make_instance(0.3, 0.4, 600, 3, model::GaussianIso{2.0}, 3);
    const Vector r = inst.observations - inst.matrix * inst.truth.entries();
    EXPECT_LE(r.norm(), 1e-13 * inst.observations.norm());
}

TEST(MakeInstance, Deterministic)
{
    const auto a = model::make_instance(0.25, 0.5, 400, 2, model::SphereUniform{10.0}, 9);
    const auto b = model::make_instance(0.25, 0.5, 400, 2, model::SphereUniform{10.0}, 9);
    EXPECT_TRUE((a.matrix.array() == b.matrix.array()).all());
    EXPECT_TRUE((a.truth.entries().array() == b.truth.entries().array()).all());
    EXPECT_EQ(a.seed, 9u);
}

TEST(MakeInstance, InfeasibleAndInvalid)
{
    EXPECT_THROW(model::make_instance(0.5, 3.0, 100, 2, model::SphereUniform{1.0}, 0), DomainError);
    EXPECT_THROW(model::make_instance(0.5, 0.1, 101, 2, model::SphereUniform{1.0}, 0), DomainError);
    EXPECT_THROW(model::make_instance(0.0, 0.1, 100, 2, model::SphereUniform{1.0}, 0), DomainError);
    EXPECT_THROW(model::make_instance(1.5, 0.1, 100, 2, model::SphereUniform{1.0}, 0), DomainError);
    EXPECT_THROW(model::make_instance(0.5, -0.1, 100, 2, model::SphereUniform{1.0}, 0), DomainError);
}

TEST(MakeInstance, ExactSparsityAndEpsilonIdentity)
{
    std::uint64_t seed = 100;
    for (int b : {1, 2, 4, 5})
        for (double delta : {0.1, 0.25, 0.5, 0.9})
            for (double rho : {0.0, 0.1, 0.3, 0.7}) {
                const Index N = 400;
                const auto inst = model::make_instance(delta, rho, N, b, model::SphereUniform{1.0}, seed++);
                const auto n = std::llround(delta * N);
                EXPECT_EQ(inst.truth.active_blocks(), std::llround(rho * n / b));
                // k / N versus rho delta: one block of rounding plus the n rounding.
                const double eps_emp = double(inst.truth.sparsity()) / N;
                EXPECT_LE(std::abs(eps_emp - rho * delta), (0.5 * b + 0.5 * rho) / N + 1e-12)
                    << "B=" << b << " delta=" << delta << " rho=" << rho;
            }
}
