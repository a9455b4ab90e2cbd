#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "blocksparse/errors.hpp"
#include "blocksparse/rng.hpp"

namespace blocksparse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace model {

// Slab laws for an active block.
struct SphereUniform {
    double radius = 1.0;
};

struct GaussianIso {
    double std = 1.0;
};

using Slab = std::variant<SphereUniform, GaussianIso>;

inline void validate_slab(const Slab& slab)
{
    const double scale = std::visit(
        [](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, SphereUniform>) return s.radius;
            else return s.std;
        },
        slab);
    if (!(scale > 0.0)) throw DomainError("slab scale must be positive");
}

// Per-block spike-and-slab prior: a block is zero with probability 1 - epsilon,
// otherwise drawn from the slab.
struct BlockPrior {
    double epsilon = 0.0;
    int block_size = 1;
    Slab slab = SphereUniform{1.0};

    void validate() const
    {
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("BlockPrior: epsilon must lie in [0, 1]");
        if (block_size < 1) throw DomainError("BlockPrior: block size must be >= 1");
        validate_slab(slab);
    }
};

class BlockSignal {
public:
    BlockSignal(int block_size, Vector entries) : block_size_(block_size), entries_(std::move(entries))
    {
        if (block_size < 1) throw DomainError("BlockSignal: block size must be >= 1");
        if (entries_.size() % block_size != 0) throw DomainError("BlockSignal: length must be a multiple of the block size");
    }

    int block_size() const noexcept { return block_size_; }
    Index dim() const noexcept { return entries_.size(); }
    Index num_blocks() const noexcept { return entries_.size() / block_size_; }
    const Vector& entries() const noexcept { return entries_; }

    auto block(Index m) const { return entries_.segment(m * block_size_, block_size_); }

    Index active_blocks() const
    {
        Index count = 0;
        for (Index m = 0; m < num_blocks(); ++m) count += block(m).squaredNorm() > 0.0 ? 1 : 0;
        return count;
    }

    // k: number of entries carried by active blocks.
    Index sparsity() const { return active_blocks() * block_size_; }

private:
    int block_size_;
    Vector entries_;
};

// Noiseless compressed-sensing instance y = A x.
struct ProblemInstance {
    Matrix matrix;
    Vector observations;
    BlockSignal truth;
    Index n = 0;
    Index N = 0;
    double delta = 0.0;
    double rho = 0.0;
    std::uint64_t seed = 0;
};

/// Uniform point on the sphere of the given radius in R^B: a standard
/// Gaussian vector rescaled to that norm.
inline Vector sample_sphere_uniform(int block_size, double radius, RngStream& rng)
{
    if (block_size < 1) throw DomainError("sample_sphere_uniform: block size must be >= 1");
    if (!(radius > 0.0)) throw DomainError("sample_sphere_uniform: radius must be positive");
    Vector v(block_size);
    double norm = 0.0;
    do {
        for (int i = 0; i < block_size; ++i) v[i] = rng.normal();
        norm = v.norm();
    } while (norm == 0.0);
    return v * (radius / norm);
}

inline Vector sample_slab(const Slab& slab, int block_size, RngStream& rng)
{
    if (const auto* sphere = std::get_if<SphereUniform>(&slab)) {
        return sample_sphere_uniform(block_size, sphere->radius, rng);
    }
    const double sd = std::get<GaussianIso>(slab).std;
    Vector v(block_size);
    for (int i = 0; i < block_size; ++i) v[i] = sd * rng.normal();
    return v;
}

/// i.i.d. blocks from the prior (Bernoulli(epsilon) activity per block).
inline BlockSignal sample_signal(const BlockPrior& prior, Index num_blocks, RngStream& rng)
{
    prior.validate();
    if (num_blocks < 1) throw DomainError("sample_signal: need at least one block");
    const int b = prior.block_size;
    Vector x = Vector::Zero(num_blocks * b);
    for (Index m = 0; m < num_blocks; ++m) {
        if (rng.uniform() < prior.epsilon) x.segment(m * b, b) = sample_slab(prior.slab, b, rng);
    }
    return {b, std::move(x)};
}

/// n x N Gaussian matrix with i.i.d. N(0, 1/n) entries (unit expected column norm).
inline Matrix sample_matrix(Index n, Index N, RngStream& rng)
{
    if (n < 1 || N < 1) throw DomainError("sample_matrix: dimensions must be positive");
    if (n > N) throw DomainError("sample_matrix: n > N (undersampling is assumed)");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Matrix a(n, N);
    for (Index j = 0; j < N; ++j) {
        for (Index i = 0; i < n; ++i) a(i, j) = scale * rng.normal();
    }
    return a;
}

/// Number of measurements and active blocks for (delta, rho, N, B).
struct InstanceGeometry {
    Index n;
    Index num_blocks;
    Index active_blocks;
};

inline InstanceGeometry instance_geometry(double delta, double rho, Index N, int block_size)
{
    if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("delta must lie in (0, 1]");
    if (!(rho >= 0.0)) throw DomainError("rho must be nonnegative");
    if (block_size < 1) throw DomainError("block size must be >= 1");
    if (N < 1 || N % block_size != 0) throw DomainError("block size must divide the signal dimension");
    const auto n = static_cast<Index>(std::llround(delta * static_cast<double>(N)));
    if (n < 1) throw DomainError("delta * N rounds to zero measurements");
    const auto k = static_cast<Index>(std::llround(rho * static_cast<double>(n) / block_size));
    const Index m = N / block_size;
    if (k > m) {
        throw DomainError("infeasible sparsity: " + std::to_string(k) + " active blocks requested but only "
                          + std::to_string(m) + " exist");
    }
    return {n, m, k};
}

/// Exact-sparsity instance: round(rho n / B) blocks chosen uniformly without
/// replacement, each drawn from the slab; y = A x.
inline ProblemInstance make_instance(double delta, double rho, Index N, int block_size, const Slab& slab,
                                     RngStream& rng)
{
    validate_slab(slab);
    const auto geo = instance_geometry(delta, rho, N, block_size);

    Matrix a = sample_matrix(geo.n, N, rng);

    std::vector<Index> order(static_cast<std::size_t>(geo.num_blocks));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = 0; i < geo.active_blocks; ++i) {
        std::uniform_int_distribution<Index> pick(i, geo.num_blocks - 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    }
    std::sort(order.begin(), order.begin() + geo.active_blocks);

    Vector x = Vector::Zero(N);
    for (Index i = 0; i < geo.active_blocks; ++i) {
        const Index m = order[static_cast<std::size_t>(i)];
        x.segment(m * block_size, block_size) = sample_slab(slab, block_size, rng);
    }
    Vector y = a * x;

    const double k = static_cast<double>(geo.active_blocks * block_size);
    ProblemInstance inst{std::move(a), std::move(y), BlockSignal{block_size, std::move(x)}, geo.n, N,
                         static_cast<double>(geo.n) / static_cast<double>(N), k / static_cast<double>(geo.n),
                         rng.seed()};
    return inst;
}

inline ProblemInstance make_instance(double delta, double rho, Index N, int block_size, const Slab& slab,
                                     std::uint64_t seed)
{
    RngStream rng(seed, 0);
    return make_instance(delta, rho, N, block_size, slab, rng);
}

} // namespace model
} // namespace blocksparse
