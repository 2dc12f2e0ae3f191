#include <doctest.h>

#include <cmath>
#include <numbers>

#include "calderon/boundary_functions.hpp"
#include "calderon/error.hpp"
#include "calderon/geometry.hpp"
#include "calderon/probes.hpp"

using namespace calderon;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double max_abs_diff(const BoundaryFunction& a, const BoundaryFunction& b)
{
    double m = 0.0;
    for (long k = 0; k < a.size(); ++k)
        m = std::max(m, std::abs(a.samples()[k] - b.samples()[k]));
    return m;
}

} // namespace

TEST_CASE("basis ordering")
{
    CHECK(basis_index(0) == 0);
    CHECK(basis_index(1) == 1);
    CHECK(basis_index(-1) == 2);
    CHECK(basis_index(2) == 3);
    CHECK(basis_index(-2) == 4);
    for (long i = 0; i < 100; ++i)
        CHECK(basis_index(basis_mode(i)) == i);
    CHECK(basis_count_covering(160) == 321);
}

TEST_CASE("fft friendly sizes")
{
    CHECK(fft_friendly_size(1) == 1);
    CHECK(fft_friendly_size(7) == 8);
    CHECK(fft_friendly_size(121) == 125);
    CHECK(fft_friendly_size(1001) == 1024);
}

TEST_CASE("inner products of basis functions")
{
    const double L = 3.7;
    const long n = 64;
    const auto e0 = BoundaryFunction::basis(L, n, 0);
    const auto e1 = BoundaryFunction::basis(L, n, 1);
    const auto e2 = BoundaryFunction::basis(L, n, 2);
    CHECK(std::abs(inner(e0, e0) - 1.0) < 1e-12);
    CHECK(std::abs(inner(e1, e2)) < 1e-12);
    // discrete orthonormality for n_b >= 4K
    const long K = 16;
    double worst = 0.0;
    for (long i = 0; i < K; ++i)
        for (long j = 0; j < K; ++j) {
            const cplx v = inner(BoundaryFunction::basis(L, n, basis_mode(i)), BoundaryFunction::basis(L, n, basis_mode(j)));
            worst = std::max(worst, std::abs(v - (i == j ? 1.0 : 0.0)));
        }
    CHECK(worst < 1e-12);
}

TEST_CASE("inner product of e^{iθ} on the unit circle is 2π")
{
    const auto f = BoundaryFunction::from_function(kTwoPi, 128, [](double s) { return std::polar(1.0, s); });
    CHECK(std::abs(inner(f, f) - kTwoPi) < 1e-12);
    CHECK(std::abs(inner(f, f.conj())) < 1e-12);
}

TEST_CASE("inner is conjugate symmetric and rejects grid mismatch")
{
    const auto f = BoundaryFunction::from_function(2.0, 50, [](double s) { return cplx(std::sin(s), s * s); });
    const auto g = BoundaryFunction::from_function(2.0, 50, [](double s) { return cplx(1.0 + s, -std::cos(3 * s)); });
    CHECK(std::abs(inner(f, g) - std::conj(inner(g, f))) < 1e-14);
    const auto h = BoundaryFunction::from_function(2.0, 51, [](double) { return cplx(1.0); });
    CHECK_THROWS(inner(f, h));
}

TEST_CASE("coefficients of simple combinations")
{
    const double L = kTwoPi;
    const long n = 64;
    const auto e3 = BoundaryFunction::basis(L, n, 3);
    const CoefficientReport r = coefficients(e3, 16);
    for (long i = 0; i < 16; ++i)
        CHECK(std::abs(r.values[i] - (i == basis_index(3) ? 1.0 : 0.0)) < 1e-12);
    const auto f = BoundaryFunction::basis(L, n, 0).scaled(2.0) + BoundaryFunction::basis(L, n, 1).scaled(cplx(0, 1));
    const CoefficientReport c = coefficients(f, 8);
    CHECK(std::abs(c.values[0] - 2.0) < 1e-12);
    CHECK(std::abs(c.values[1] - cplx(0, 1)) < 1e-12);
    CHECK(c.tail_mass < 1e-12);
    CHECK_FALSE(c.warning);
}

TEST_CASE("coefficient tail guards")
{
    const double L = kTwoPi;
    const long n = 256;
    // half the mass at mode 20, outside K = 8
    const auto f = BoundaryFunction::basis(L, n, 0) + BoundaryFunction::basis(L, n, 20);
    CHECK_THROWS_AS(coefficients(f, 8), ResolutionError);
    // a sliver of mass outside triggers only the warning
    const auto g = BoundaryFunction::basis(L, n, 0) + BoundaryFunction::basis(L, n, 20).scaled(1e-2);
    const CoefficientReport r = coefficients(g, 8);
    CHECK(r.warning);
    CHECK(r.tail_mass == doctest::Approx(1e-4).epsilon(1e-9));
    // Parseval on the truncated basis
    double kept = 0.0;
    for (const cplx& a : r.values)
        kept += std::norm(a);
    CHECK(kept <= g.norm_squared() + 1e-12);
}

TEST_CASE("norm from samples equals the Parseval sum")
{
    const double L = 5.0;
    const long n = 96;
    BoundaryFunction f = BoundaryFunction::constant(L, n, 0.0);
    for (long m = -10; m <= 10; ++m)
        f = f + BoundaryFunction::basis(L, n, m).scaled(cplx(1.0 / (1 + m * m), 0.3 * m));
    double parseval = 0.0;
    for (const cplx& a : f.spectrum())
        parseval += std::norm(a);
    CHECK(std::abs(f.norm_squared() - parseval) <= 1e-8 * parseval);
    CHECK(std::abs(f.norm_squared() - inner(f, f).real()) <= 1e-12 * parseval);
}

TEST_CASE("interpolation without an exact evaluator")
{
    const double L = kTwoPi;
    auto fn = [](double s) { return cplx(std::cos(2 * s), std::sin(s)); };
    const auto exact = BoundaryFunction::from_function(L, 256, fn);
    std::vector<cplx> samples(exact.samples().begin(), exact.samples().end());
    const BoundaryFunction sampled(L, samples);
    CHECK_FALSE(sampled.has_exact());
    for (double s : {0.01, 1.234, 4.0, 6.2})
        CHECK(std::abs(sampled.value_at(s) - fn(s)) < 1e-9);
}

TEST_CASE("pointwise division")
{
    const double L = kTwoPi;
    const long n = 128;
    const auto f = BoundaryFunction::from_function(L, n, [](double s) { return std::polar(1.0 + 0.1 * s, 3 * s); });
    const auto two = BoundaryFunction::constant(L, n, 2.0);
    CHECK(max_abs_diff(pointwise_div(f, two), f.scaled(0.5)) < 1e-15);
    const auto gamma = BoundaryFunction::from_function(L, n, [](double s) { return cplx(2.0 + std::cos(s)); });
    CHECK(max_abs_diff(pointwise_div(f, gamma) * gamma, f) < 1e-12);
    const auto bad = BoundaryFunction::from_function(L, n, [](double s) { return cplx(std::cos(s)); });
    CHECK_THROWS(pointwise_div(f, bad));
}

TEST_CASE("division by a perturbed divisor stays within the first-order bound")
{
    const double L = kTwoPi;
    const long n = 256;
    const double gamma0 = 1.0;
    const auto f = BoundaryFunction::from_function(L, n, [](double s) { return std::polar(1.0, 5 * s) * (1.0 + std::sin(s)); });
    const auto gamma = BoundaryFunction::from_function(L, n, [](double s) { return cplx(2.0 + std::cos(s)); });
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const auto hat = BoundaryFunction::from_function(
            L, n, [eps](double s) { return cplx(2.0 + std::cos(s) + eps * std::sin(7 * s)); });
        const auto d = pointwise_div(f, hat) + pointwise_div(f, gamma).scaled(-1.0);
        const double lhs = std::sqrt(d.norm_squared());
        const double bound = eps * std::sqrt(f.norm_squared()) / (gamma0 * gamma0);
        CHECK(lhs <= bound * (1.0 + 2.0 * eps));
    }
}

TEST_CASE("gamma probe keeps 99.9% of its mass at the literal truncation rule")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    const BoundaryChart chart = build_chart(d, 0.0);
    const FrameAtP frame = select_xi(chart);
    const ProbeSpec spec = make_probe_spec(chart, frame, 0.5, ProbeMode::Gamma);
    for (double N : {8.0, 16.0, 32.0, 64.0, 128.0}) {
        const long K = basis_count_covering(long(std::ceil(2.0 * N * spec.xi_prime_norm())) + 32);
        const BoundaryFunction f = probe_gamma(spec, N, fft_friendly_size(8 * K));
        double kept = 0.0;
        for (const auto& c : sparse_coefficients(f, K, 0.0))
            kept += std::norm(c.value);
        CAPTURE(N);
        CHECK(kept / f.norm_squared() >= 0.999);
    }
}

TEST_CASE("grad probe keeps 99.9% of its mass at the literal truncation rule")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    const BoundaryChart chart = build_chart(d, 0.0);
    const FrameAtP frame = select_xi(chart);
    const ProbeSpec spec = make_probe_spec(chart, frame, 0.5, ProbeMode::Grad);
    for (double t : {4.0, 8.0, 16.0, 27.0}) {
        const double N = t * t;
        const long K = basis_count_covering(long(std::ceil(2.0 * N * spec.xi_prime_norm())) + 32);
        const BoundaryFunction f = probe_grad(spec, t, fft_friendly_size(8 * K));
        double kept = 0.0;
        for (const auto& c : sparse_coefficients(f, K, 0.0))
            kept += std::norm(c.value);
        CAPTURE(t);
        CHECK(kept / f.norm_squared() >= 0.999);
    }
}
