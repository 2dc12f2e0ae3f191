#pragma once

#include <memory>

#include "calderon/boundary_functions.hpp"
#include "calderon/geometry.hpp"

namespace calderon {

/// Smooth cutoff: 1 on |t| <= 1/2, 0 on |t| >= 1, the exponential
/// partition-of-unity transition in between.
double eta(double t);
double eta_derivative(double t);
/// I_η = ∫_R η(|x|)² dx, computed once by adaptive quadrature.
double eta_integral();

enum class ProbeMode { Gamma, Grad };

struct ProbeSpec {
    std::shared_ptr<const BoundaryChart> chart;
    FrameAtP frame;
    double theta = 0.5; // Hölder exponent θ in (0, 1)
    ProbeMode mode = ProbeMode::Gamma;
    double c_p = 0.0;       // ((1 + φ'²) I_η)^{-1/2}
    double c_p_prime = 0.0; // √2 (1 + φ'²)^{-1/4} I_η^{-1/2}
    int dimension = 2;
    long K = 0; // basis truncation the boundary grid must cover

    /// Gamma mode: M = N^{1/(1+θ)}; grad mode: M = N^{1/2}.
    double M_of(double N) const;
    double xi_prime() const { return frame.xi.x(); }
    double xi_prime_norm() const { return std::abs(frame.xi.x()); }
};

ProbeSpec make_probe_spec(const BoundaryChart& chart, const FrameAtP& frame, double theta, ProbeMode mode,
                          long K = 0);

/// n_b = 8 max(K, ⌈N|ξ'|L/2π⌉), rounded up to a 2^a 3^b 5^c size.
long probe_grid_size(const ProbeSpec& spec, double N);

/// Chart formula amplitude · η(M|x'|) e^{iNξ'x'} at chart abscissa x'.
cplx probe_chart_value(const ProbeSpec& spec, double N, double M, double amplitude, double x1);

/// Boundary trace with explicit (N, M, amplitude); zero outside the support.
/// Throws GeometryError when 1/M exceeds the chart radius.
BoundaryFunction probe_trace(const ProbeSpec& spec, double N, double M, double amplitude, long n_b = 0);

/// f_N = N^{-1/2} M^{(d-1)/2} C_P η(M|x'|) e^{iNξ'x'} with M from the spec's rule.
BoundaryFunction probe_gamma(const ProbeSpec& spec, double N, long n_b = 0);
double probe_gamma_amplitude(const ProbeSpec& spec, double N);

/// f_{t²} = M^{(d-1)/2} C'_P η(M|x'|) e^{iNξ'x'} with N = t², M = t.
BoundaryFunction probe_grad(const ProbeSpec& spec, double t, long n_b = 0);
double probe_grad_amplitude(const ProbeSpec& spec, double t);

/// Samples of f_{t²} on a uniform grid in the chart abscissa covering the
/// support |x'| <= 1/t; used by PDE-free computations that only need inner
/// products. weights[k] = h √(1 + φ'(x_k)²) is the arclength quadrature weight.
struct ChartSamples {
    std::vector<double> x;
    std::vector<double> weights;
};
ChartSamples chart_window(const ProbeSpec& spec, double half_width, double max_frequency);

/// |inner(f_{t²}, f_{s²})| divided by (t + s + 1) / |t² - s²|.
double pair_decay_check(const ProbeSpec& spec, double t, double s);

} // namespace calderon
