#include "calderon/noise.hpp"

#include <cmath>
#include <numbers>

#include "calderon/error.hpp"

namespace calderon {

namespace {

std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Uniform on (0, 1] from the top 53 bits.
double unit_open(std::uint64_t z)
{
    return (double(z >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace

cplx noise_entry(std::uint64_t seed, long i, long j)
{
    const std::uint64_t key =
        mix64(mix64(mix64(seed) ^ (std::uint64_t(i) * 0xD1342543DE82EF95ULL)) ^ (std::uint64_t(j) * 0xC2B2AE3D27D4EB4FULL));
    const double u1 = unit_open(mix64(key ^ 0x5851F42D4C957F2DULL));
    const double u2 = unit_open(mix64(key ^ 0x14057B7EF767814FULL));
    // Box-Muller with radius sqrt(-ln u): each component has variance 1/2.
    const double r = std::sqrt(-std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

NoiseRealization::NoiseRealization(std::uint64_t seed, long K, bool zero) : seed_(seed), K_(K), zero_(zero)
{
    if (K < 1)
        throw ConfigError("noise truncation K must be at least 1");
}

cplx NoiseRealization::operator()(long i, long j) const
{
    if (i < 0 || j < 0 || i >= K_ || j >= K_)
        throw ResolutionError("noise index outside the truncation");
    return zero_ ? cplx(0.0) : noise_entry(seed_, i, j);
}

Eigen::MatrixXcd NoiseRealization::dense() const
{
    Eigen::MatrixXcd x(K_, K_);
    for (long i = 0; i < K_; ++i)
        for (long j = 0; j < K_; ++j)
            x(i, j) = (*this)(i, j);
    return x;
}

NoiseRealization sample_noise(std::uint64_t seed, long K)
{
    return NoiseRealization(seed, K);
}

NoiseCoefficients noise_coefficients(const BoundaryFunction& f, long K, double drop_tolerance)
{
    const auto& spec = f.spectrum();
    const long n = f.size();
    double total = 0.0, kept = 0.0;
    for (long bin = 0; bin < n; ++bin) {
        const long mode = bin < n - n / 2 ? bin : bin - n;
        const double m2 = std::norm(spec[bin]);
        total += m2;
        if (basis_index(mode) < K)
            kept += m2;
    }
    NoiseCoefficients c;
    c.kept_mass = kept;
    c.tail_mass = std::max(0.0, total - kept);
    if (c.tail_mass > 1e-2 * total)
        throw ResolutionError("noise truncation K leaves more than 1e-2 of the boundary function's mass");
    c.warning = c.tail_mass > 1e-6 * total;
    c.values = sparse_coefficients(f, K, drop_tolerance);
    return c;
}

cplx noise_pair(const NoiseRealization& noise, const NoiseCoefficients& a, const NoiseCoefficients& b)
{
    if (noise.is_zero())
        return 0.0;
    cplx acc = 0.0;
    for (const auto& ai : a.values) {
        cplx row = 0.0;
        for (const auto& bj : b.values)
            row += bj.value * noise(ai.index, bj.index);
        acc += ai.value * row;
    }
    return acc;
}

cplx noise_pair(const NoiseRealization& noise, const BoundaryFunction& f, const BoundaryFunction& g)
{
    if (noise.is_zero())
        return 0.0;
    return noise_pair(noise, noise_coefficients(f, noise.K()), noise_coefficients(g, noise.K()));
}

double noise_second_moment(const NoiseCoefficients& a, const NoiseCoefficients& b)
{
    double acc = 0.0;
    for (const auto& ai : a.values)
        for (const auto& bj : b.values)
            acc += std::norm(ai.value) * std::norm(bj.value);
    return acc;
}

long truncation_rule(double N_max, double xi_prime_norm, double L)
{
    const long modes = long(std::ceil(2.0 * N_max * xi_prime_norm * L / (2.0 * std::numbers::pi))) + 32;
    return basis_count_covering(modes);
}

Measurement measure(const NoisyOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                    const MeshPtr& mesh)
{
    Measurement m;
    m.clean = dn_pair(*oracle.clean, f, g, mesh);
    m.noise = noise_pair(oracle.noise, f, g);
    return m;
}

cplx noisy_pair(const NoisyOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                const MeshPtr& mesh)
{
    return measure(oracle, f, g, mesh).value();
}

} // namespace calderon
