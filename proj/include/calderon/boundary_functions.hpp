#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace calderon {

using cplx = std::complex<double>;

/// Interleaved ordering of the boundary Fourier basis: 0, +1, -1, +2, -2, ...
constexpr long basis_index(long mode) { return mode > 0 ? 2 * mode - 1 : -2 * mode; }
constexpr long basis_mode(long index) { return index % 2 == 1 ? (index + 1) / 2 : -index / 2; }
/// Number of leading indices needed to cover every mode with |n| <= max_mode.
constexpr long basis_count_covering(long max_mode) { return 2 * max_mode + 1; }

/// Smallest n >= target of the form 2^a 3^b 5^c.
long fft_friendly_size(long target);

/// One basis coefficient (f | e_n) with its interleaved index.
struct SparseCoefficient {
    long index;
    cplx value;
};

struct CoefficientReport {
    std::vector<cplx> values; // values[i] = (f | e_{mode(i)})
    double tail_mass = 0.0;   // ‖f‖² - Σ |values|², clamped at 0
    bool warning = false;     // tail_mass > 1e-6 ‖f‖²
};

/// Complex function on the boundary held as samples on a uniform arclength
/// grid s_k = k L / n_b. An optional exact evaluator is carried along so that
/// consumers needing off-grid values (mesh boundary vertices) do not have to
/// interpolate.
class BoundaryFunction {
public:
    using Evaluator = std::function<cplx(double)>;

    BoundaryFunction() = default;
    BoundaryFunction(double length, std::vector<cplx> samples, Evaluator exact = {});

    static BoundaryFunction from_function(double length, long n_samples, Evaluator f);
    /// e_n(s) = L^{-1/2} exp(2πins/L).
    static BoundaryFunction basis(double length, long n_samples, long mode);
    static BoundaryFunction constant(double length, long n_samples, cplx c);

    long size() const { return long(samples_.size()); }
    double length() const { return length_; }
    double spacing() const { return length_ / double(samples_.size()); }
    std::span<const cplx> samples() const { return samples_; }
    bool has_exact() const { return bool(exact_); }
    const Evaluator& exact() const { return exact_; }

    /// Value at arclength s: the exact evaluator when present, otherwise
    /// six-point periodic Lagrange interpolation of the samples.
    cplx value_at(double s) const;

    BoundaryFunction conj() const;
    BoundaryFunction scaled(cplx a) const;
    BoundaryFunction operator+(const BoundaryFunction& other) const;
    BoundaryFunction operator*(const BoundaryFunction& other) const;

    /// All resolved coefficients (f | e_n) for n in [-n_b/2, n_b/2), stored
    /// by DFT bin; computed once and shared by copies.
    const std::vector<cplx>& spectrum() const;
    cplx coefficient_of_mode(long mode) const;

    double norm_squared() const;

private:
    struct Cache {
        std::once_flag once;
        std::vector<cplx> spectrum;
    };

    double length_ = 0.0;
    std::vector<cplx> samples_;
    Evaluator exact_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// (f|g) = ∫ f conj(g) ds by the periodic trapezoid rule. Throws on grid mismatch.
cplx inner(const BoundaryFunction& f, const BoundaryFunction& g);

/// Leading K coefficients in interleaved order. Requires n_b >= 4K; throws
/// ResolutionError when the unresolved tail exceeds 1e-2 of ‖f‖².
CoefficientReport coefficients(const BoundaryFunction& f, long K);

/// Coefficients with index < K, keeping the largest entries until the
/// discarded mass is at most tail_tolerance * Σ|a|². Sorted by index.
std::vector<SparseCoefficient> sparse_coefficients(const BoundaryFunction& f, long K,
                                                   double tail_tolerance = 1e-13);

/// Pointwise quotient f / γ_b for a real, strictly positive divisor.
BoundaryFunction pointwise_div(const BoundaryFunction& f, const BoundaryFunction& divisor);

} // namespace calderon
