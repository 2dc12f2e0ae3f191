#include "calderon/probes.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "calderon/error.hpp"

namespace calderon {

namespace {

double psi(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
double psi_prime(double x) { return x > 0.0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

} // namespace

double eta(double t)
{
    const double a = std::abs(t);
    if (a <= 0.5)
        return 1.0;
    if (a >= 1.0)
        return 0.0;
    const double u = 2.0 * (a - 0.5);
    const double p = psi(1.0 - u), q = psi(u);
    return p / (p + q);
}

double eta_derivative(double t)
{
    const double a = std::abs(t);
    if (a <= 0.5 || a >= 1.0)
        return 0.0;
    const double u = 2.0 * (a - 0.5);
    const double p = psi(1.0 - u), q = psi(u);
    const double dp = -psi_prime(1.0 - u), dq = psi_prime(u);
    const double deta_du = (dp * q - p * dq) / ((p + q) * (p + q));
    return 2.0 * deta_du * (t < 0.0 ? -1.0 : 1.0);
}

double eta_integral()
{
    static const double value = [] {
        using boost::math::quadrature::gauss_kronrod;
        auto sq = [](double x) { return eta(x) * eta(x); };
        const double tail = gauss_kronrod<double, 61>::integrate(sq, 0.5, 1.0, 15, 1e-13);
        return 2.0 * (0.5 + tail);
    }();
    return value;
}

double ProbeSpec::M_of(double N) const
{
    return mode == ProbeMode::Gamma ? std::pow(N, 1.0 / (1.0 + theta)) : std::sqrt(N);
}

ProbeSpec make_probe_spec(const BoundaryChart& chart, const FrameAtP& frame, double theta, ProbeMode mode, long K)
{
    if (!(theta > 0.0 && theta < 1.0))
        throw ConfigError("theta must lie in (0, 1)");
    ProbeSpec spec;
    spec.chart = std::make_shared<const BoundaryChart>(chart);
    spec.frame = frame;
    spec.theta = theta;
    spec.mode = mode;
    spec.K = K;
    const double s = chart.slope_at_anchor();
    const double i_eta = eta_integral();
    spec.c_p = 1.0 / std::sqrt((1.0 + s * s) * i_eta);
    spec.c_p_prime = std::sqrt(2.0) * std::pow(1.0 + s * s, -0.25) / std::sqrt(i_eta);
    if (spec.xi_prime_norm() == 0.0)
        throw GeometryError("probe direction has vanishing tangential part");
    return spec;
}

long probe_grid_size(const ProbeSpec& spec, double N)
{
    const double L = spec.chart->domain().length();
    const long wave = long(std::ceil(N * spec.xi_prime_norm() * L / (2.0 * std::numbers::pi)));
    return fft_friendly_size(8 * std::max(spec.K, std::max(wave, 1L)));
}

cplx probe_chart_value(const ProbeSpec& spec, double N, double M, double amplitude, double x1)
{
    const double cut = eta(M * std::abs(x1));
    if (cut == 0.0)
        return 0.0;
    return amplitude * cut * std::polar(1.0, N * spec.xi_prime() * x1);
}

BoundaryFunction probe_trace(const ProbeSpec& spec, double N, double M, double amplitude, long n_b)
{
    const auto chart = spec.chart;
    if (1.0 / M > chart->radius())
        throw GeometryError("probe support 1/M exceeds the chart radius");
    if (n_b <= 0)
        n_b = probe_grid_size(spec, N);
    const DomainGeometry& dom = chart->domain();
    const double L = dom.length();
    const double xi1 = spec.xi_prime();

    auto evaluator = [chart, N, M, amplitude, xi1](double s) -> cplx {
        const DomainGeometry& d = chart->domain();
        const Vec2 y = chart->to_chart(d.point(d.theta_at(s)));
        if (std::abs(y.x()) * M >= 1.0 || std::abs(y.y()) > chart->radius())
            return 0.0;
        return amplitude * eta(M * std::abs(y.x())) * std::polar(1.0, N * xi1 * y.x());
    };

    // Only samples over the support arc can be nonzero.
    const double s_lo = dom.arclength(chart->theta_of(-1.0 / M));
    const double s_hi = dom.arclength(chart->theta_of(1.0 / M));
    const double h = L / double(n_b);
    std::vector<cplx> samples(n_b, 0.0);
    for (long k = long(std::ceil(s_lo / h)); k <= long(std::floor(s_hi / h)); ++k) {
        const long idx = ((k % n_b) + n_b) % n_b;
        samples[idx] = evaluator(double(idx) * h);
    }
    return BoundaryFunction(L, std::move(samples), evaluator);
}

double probe_gamma_amplitude(const ProbeSpec& spec, double N)
{
    const double M = spec.M_of(N);
    return std::pow(N, -0.5) * std::pow(M, 0.5 * (spec.dimension - 1)) * spec.c_p;
}

BoundaryFunction probe_gamma(const ProbeSpec& spec, double N, long n_b)
{
    if (!(N >= 1.0))
        throw ConfigError("probe frequency N must be at least 1");
    return probe_trace(spec, N, spec.M_of(N), probe_gamma_amplitude(spec, N), n_b);
}

double probe_grad_amplitude(const ProbeSpec& spec, double t)
{
    return std::pow(t, 0.5 * (spec.dimension - 1)) * spec.c_p_prime;
}

BoundaryFunction probe_grad(const ProbeSpec& spec, double t, long n_b)
{
    if (!(t >= 1.0))
        throw ConfigError("probe parameter t must be at least 1");
    return probe_trace(spec, t * t, t, probe_grad_amplitude(spec, t), n_b);
}

ChartSamples chart_window(const ProbeSpec& spec, double half_width, double max_frequency)
{
    const BoundaryChart& chart = *spec.chart;
    if (half_width > chart.radius())
        throw GeometryError("sample window exceeds the chart radius");
    // Trapezoid sums of smooth compactly supported products are exact up to
    // aliasing, which is excluded once 2π/h exceeds the product bandwidth.
    const double h_max = 2.0 * std::numbers::pi / (1.25 * max_frequency);
    const long n = std::max(16L, long(std::ceil(2.0 * half_width / h_max)));
    const double h = 2.0 * half_width / double(n);
    ChartSamples w;
    w.x.resize(n + 1);
    w.weights.resize(n + 1);
    for (long k = 0; k <= n; ++k) {
        const double x = -half_width + double(k) * h;
        const double slope = chart.phi_prime(x);
        w.x[k] = x;
        w.weights[k] = h * std::sqrt(1.0 + slope * slope);
    }
    return w;
}

double pair_decay_check(const ProbeSpec& spec, double t, double s)
{
    const long n = probe_grid_size(spec, std::max(t, s) * std::max(t, s));
    const BoundaryFunction f = probe_grad(spec, t, n);
    const BoundaryFunction g = probe_grad(spec, s, n);
    const double value = std::abs(inner(f, g));
    if (t == s)
        return value;
    return value / ((t + s + 1.0) / std::abs(t * t - s * s));
}

} // namespace calderon
