#pragma once

#include <cstdint>
#include <vector>

#include "calderon/boundary_functions.hpp"
#include "calderon/solver.hpp"

namespace calderon {

/// X_ij for one seed: Re and Im independent N(0, 1/2), a pure function of
/// (seed, i, j), so any truncation of one seed is a prefix of any larger one.
cplx noise_entry(std::uint64_t seed, long i, long j);

/// Frozen K×K realization. Entries are generated on demand from the counter
/// hash; nothing is stored, so copies are cheap and queries are pure.
class NoiseRealization {
public:
    NoiseRealization(std::uint64_t seed, long K, bool zero = false);
    static NoiseRealization zero(long K) { return NoiseRealization(0, K, true); }

    std::uint64_t seed() const { return seed_; }
    long K() const { return K_; }
    bool is_zero() const { return zero_; }

    /// X_ij for i, j < K; throws ResolutionError outside the truncation.
    cplx operator()(long i, long j) const;
    Eigen::MatrixXcd dense() const;

private:
    std::uint64_t seed_;
    long K_;
    bool zero_;
};

NoiseRealization sample_noise(std::uint64_t seed, long K);

/// Leading coefficients of one argument of a noise pairing, kept sparse.
struct NoiseCoefficients {
    std::vector<SparseCoefficient> values;
    double tail_mass = 0.0; // mass of f outside indices < K
    double kept_mass = 0.0; // Σ_{i<K} |(f|e_i)|²
    bool warning = false;
};

/// Coefficients with index < K. Throws ResolutionError when the mass beyond
/// the truncation exceeds 1e-2 ‖f‖²; flags a warning above 1e-6.
NoiseCoefficients noise_coefficients(const BoundaryFunction& f, long K, double drop_tolerance = 1e-13);

/// Σ_{i,j<K} a_i b_j X_ij.
cplx noise_pair(const NoiseRealization& noise, const BoundaryFunction& f, const BoundaryFunction& g);
cplx noise_pair(const NoiseRealization& noise, const NoiseCoefficients& a, const NoiseCoefficients& b);

/// Exact E|noise_pair|² over the law of X for the truncated coefficients:
/// Σ_{i,j} |a_i|² |b_j|².
double noise_second_moment(const NoiseCoefficients& a, const NoiseCoefficients& b);

/// Smallest K covering |n| <= ⌈2 N_max |ξ'| L / 2π⌉ + 32.
long truncation_rule(double N_max, double xi_prime_norm, double L);

/// Clean oracle plus one frozen realization.
struct NoisyOracle {
    const CleanOracle* clean = nullptr;
    NoiseRealization noise = NoiseRealization::zero(1);
};

struct Measurement {
    cplx clean;
    cplx noise;
    cplx value() const { return clean + noise; }
};

/// dn_pair(f, g) + noise_pair(f, g).
cplx noisy_pair(const NoisyOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                const MeshPtr& mesh = nullptr);
Measurement measure(const NoisyOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                    const MeshPtr& mesh = nullptr);

} // namespace calderon
