#include "calderon/boundary_functions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "calderon/error.hpp"

namespace calderon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_same_grid(const BoundaryFunction& f, const BoundaryFunction& g)
{
    if (f.size() != g.size() || std::abs(f.length() - g.length()) > 1e-12 * f.length())
        throw ResolutionError("boundary functions live on different grids");
}

long bin_of_mode(long mode, long n)
{
    const long b = mode % n;
    return b < 0 ? b + n : b;
}

} // namespace

long fft_friendly_size(long target)
{
    long best = 1;
    while (best < target)
        best *= 2;
    for (long p5 = 1; p5 <= best; p5 *= 5)
        for (long p3 = p5; p3 <= best; p3 *= 3)
            for (long p2 = p3; p2 <= best; p2 *= 2)
                if (p2 >= target && p2 < best)
                    best = p2;
    return best;
}

BoundaryFunction::BoundaryFunction(double length, std::vector<cplx> samples, Evaluator exact)
    : length_(length), samples_(std::move(samples)), exact_(std::move(exact))
{
    if (samples_.empty() || !(length_ > 0.0))
        throw ResolutionError("boundary function needs a nonempty grid and positive length");
}

BoundaryFunction BoundaryFunction::from_function(double length, long n_samples, Evaluator f)
{
    std::vector<cplx> s(n_samples);
    for (long k = 0; k < n_samples; ++k)
        s[k] = f(length * double(k) / double(n_samples));
    return BoundaryFunction(length, std::move(s), std::move(f));
}

BoundaryFunction BoundaryFunction::basis(double length, long n_samples, long mode)
{
    const double amp = 1.0 / std::sqrt(length);
    return from_function(length, n_samples, [=](double s) {
        return amp * std::polar(1.0, kTwoPi * double(mode) * s / length);
    });
}

BoundaryFunction BoundaryFunction::constant(double length, long n_samples, cplx c)
{
    return from_function(length, n_samples, [c](double) { return c; });
}

cplx BoundaryFunction::value_at(double s) const
{
    if (exact_)
        return exact_(s);
    const long n = size();
    const double u = s / spacing();
    const long k0 = long(std::floor(u));
    const double frac = u - double(k0);
    // Lagrange weights on nodes k0-2 .. k0+3.
    cplx acc = 0.0;
    for (int j = -2; j <= 3; ++j) {
        double w = 1.0;
        for (int m = -2; m <= 3; ++m)
            if (m != j)
                w *= (frac - m) / double(j - m);
        acc += w * samples_[bin_of_mode(k0 + j, n)];
    }
    return acc;
}

BoundaryFunction BoundaryFunction::conj() const
{
    std::vector<cplx> s(samples_.size());
    std::transform(samples_.begin(), samples_.end(), s.begin(), [](cplx z) { return std::conj(z); });
    Evaluator e;
    if (exact_)
        e = [f = exact_](double x) { return std::conj(f(x)); };
    return BoundaryFunction(length_, std::move(s), std::move(e));
}

BoundaryFunction BoundaryFunction::scaled(cplx a) const
{
    std::vector<cplx> s(samples_.size());
    std::transform(samples_.begin(), samples_.end(), s.begin(), [a](cplx z) { return a * z; });
    Evaluator e;
    if (exact_)
        e = [f = exact_, a](double x) { return a * f(x); };
    return BoundaryFunction(length_, std::move(s), std::move(e));
}

BoundaryFunction BoundaryFunction::operator+(const BoundaryFunction& other) const
{
    require_same_grid(*this, other);
    std::vector<cplx> s(samples_.size());
    for (size_t k = 0; k < s.size(); ++k)
        s[k] = samples_[k] + other.samples_[k];
    Evaluator e;
    if (exact_ && other.exact_)
        e = [f = exact_, g = other.exact_](double x) { return f(x) + g(x); };
    return BoundaryFunction(length_, std::move(s), std::move(e));
}

BoundaryFunction BoundaryFunction::operator*(const BoundaryFunction& other) const
{
    require_same_grid(*this, other);
    std::vector<cplx> s(samples_.size());
    for (size_t k = 0; k < s.size(); ++k)
        s[k] = samples_[k] * other.samples_[k];
    Evaluator e;
    if (exact_ && other.exact_)
        e = [f = exact_, g = other.exact_](double x) { return f(x) * g(x); };
    return BoundaryFunction(length_, std::move(s), std::move(e));
}

const std::vector<cplx>& BoundaryFunction::spectrum() const
{
    std::call_once(cache_->once, [this] {
        Eigen::FFT<double> fft;
        std::vector<cplx> out;
        fft.fwd(out, samples_);
        const double scale = std::sqrt(length_) / double(samples_.size());
        for (auto& z : out)
            z *= scale;
        cache_->spectrum = std::move(out);
    });
    return cache_->spectrum;
}

cplx BoundaryFunction::coefficient_of_mode(long mode) const
{
    const long n = size();
    if (mode < -n / 2 || mode >= n - n / 2)
        return 0.0;
    return spectrum()[bin_of_mode(mode, n)];
}

double BoundaryFunction::norm_squared() const
{
    double acc = 0.0;
    for (const auto& z : samples_)
        acc += std::norm(z);
    return acc * spacing();
}

cplx inner(const BoundaryFunction& f, const BoundaryFunction& g)
{
    require_same_grid(f, g);
    cplx acc = 0.0;
    const auto a = f.samples();
    const auto b = g.samples();
    for (size_t k = 0; k < a.size(); ++k)
        acc += a[k] * std::conj(b[k]);
    return acc * f.spacing();
}

CoefficientReport coefficients(const BoundaryFunction& f, long K)
{
    if (K < 1)
        throw ResolutionError("coefficient truncation must be positive");
    if (f.size() < 4 * K)
        throw ResolutionError("boundary grid has fewer than 4K samples");
    CoefficientReport rep;
    rep.values.resize(K);
    double kept = 0.0;
    for (long i = 0; i < K; ++i) {
        rep.values[i] = f.coefficient_of_mode(basis_mode(i));
        kept += std::norm(rep.values[i]);
    }
    const double total = f.norm_squared();
    rep.tail_mass = std::max(0.0, total - kept);
    if (rep.tail_mass > 1e-2 * total)
        throw ResolutionError("coefficient truncation leaves more than 1e-2 of the mass");
    rep.warning = rep.tail_mass > 1e-6 * total;
    return rep;
}

std::vector<SparseCoefficient> sparse_coefficients(const BoundaryFunction& f, long K,
                                                   double tail_tolerance)
{
    const auto& spec = f.spectrum();
    const long n = f.size();
    std::vector<SparseCoefficient> all;
    all.reserve(std::min(K, n));
    double total = 0.0;
    for (long bin = 0; bin < n; ++bin) {
        const long mode = bin < n - n / 2 ? bin : bin - n;
        const long idx = basis_index(mode);
        if (idx >= K)
            continue;
        all.push_back({idx, spec[bin]});
        total += std::norm(spec[bin]);
    }
    std::sort(all.begin(), all.end(),
              [](const auto& x, const auto& y) { return std::norm(x.value) > std::norm(y.value); });
    // Drop from the small end while the discarded mass stays within budget.
    double dropped = 0.0;
    size_t keep = all.size();
    while (keep > 0 && dropped + std::norm(all[keep - 1].value) <= tail_tolerance * total) {
        dropped += std::norm(all[keep - 1].value);
        --keep;
    }
    all.resize(keep);
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
    return all;
}

BoundaryFunction pointwise_div(const BoundaryFunction& f, const BoundaryFunction& divisor)
{
    require_same_grid(f, divisor);
    const auto a = f.samples();
    const auto d = divisor.samples();
    std::vector<cplx> s(a.size());
    for (size_t k = 0; k < a.size(); ++k) {
        if (!(d[k].real() > 0.0) || d[k].imag() != 0.0)
            throw ResolutionError("pointwise_div needs a real positive divisor");
        s[k] = a[k] / d[k].real();
    }
    BoundaryFunction::Evaluator e;
    if (f.has_exact() && divisor.has_exact())
        e = [g = f.exact(), h = divisor.exact()](double x) { return g(x) / h(x).real(); };
    return BoundaryFunction(f.length(), std::move(s), std::move(e));
}

} // namespace calderon
