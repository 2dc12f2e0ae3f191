#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace calderon {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// One Fourier mode of a radial perturbation: a cos(kϑ) + b sin(kϑ).
struct RadialMode {
    int k = 0;
    double a = 0.0;
    double b = 0.0;
};

/// A star-shaped planar domain with boundary r(ϑ)(cos ϑ, sin ϑ), r = 1 + ρ(ϑ).
///
/// The unit disk is the ρ ≡ 0 case. Arclength is tabulated once at
/// construction so that s(ϑ) and its inverse are cheap and accurate to
/// round-off.
class DomainGeometry {
public:
    enum class Kind { UnitDisk, PerturbedDisk };

    static DomainGeometry unit_disk();
    /// Requires |ρ| < 1/2 everywhere; throws ConfigError otherwise.
    static DomainGeometry perturbed_disk(std::vector<RadialMode> modes);

    Kind kind() const { return kind_; }
    const std::vector<RadialMode>& modes() const { return modes_; }

    double radius(double theta) const;
    double radius_d1(double theta) const;
    double radius_d2(double theta) const;

    Vec2 point(double theta) const;
    /// d point / dϑ; points counter-clockwise.
    Vec2 tangent(double theta) const;
    Vec2 second_derivative(double theta) const;
    Vec2 unit_tangent(double theta) const;
    Vec2 outward_normal(double theta) const;

    /// Arclength from ϑ = 0, for ϑ in [0, 2π]; extended periodically.
    double arclength(double theta) const;
    double theta_at(double s) const;
    double length() const { return length_; }
    double diameter() const;

    /// Minimum and maximum of r(ϑ).
    double min_radius() const { return rmin_; }
    double max_radius() const { return rmax_; }

    bool contains(const Vec2& x) const;

private:
    DomainGeometry(Kind kind, std::vector<RadialMode> modes);
    void tabulate();

    Kind kind_;
    std::vector<RadialMode> modes_;
    std::vector<double> cumulative_; // arclength at uniform ϑ nodes
    double length_ = 0.0;
    double rmin_ = 1.0;
    double rmax_ = 1.0;
};

/// Hölder data for the slope of the graph function near the anchor:
/// |φ'(x') - φ'(0)| <= constant * |x'|^exponent on the chart.
struct HolderData {
    double exponent = 0.0;
    double constant = 0.0;
};

/// Local graph coordinates at a boundary point P.
///
/// Chart coordinates y = (y', y_d) are global coordinates translated to P and
/// rotated so that e_1 is the counter-clockwise unit tangent at P and e_d is
/// the inward unit normal. The domain lies locally above the graph
/// y_d = φ(y'). The anchor sits at p' = 0 with φ(0) = 0, so F(x) = (x', x_d + φ(x')).
class BoundaryChart {
public:
    BoundaryChart(const DomainGeometry& domain, double theta_anchor, double chart_radius);

    const DomainGeometry& domain() const { return domain_; }
    double theta_anchor() const { return theta_; }
    const Vec2& anchor() const { return anchor_; }
    double radius() const { return radius_; }
    double anchor_parameter() const { return 0.0; }
    /// Chart axes in global coordinates.
    const Vec2& axis_tangent() const { return e1_; }
    const Vec2& axis_normal() const { return e2_; }

    Vec2 to_chart(const Vec2& global) const;
    Vec2 to_global(const Vec2& chart) const;

    /// Boundary parameter ϑ of the boundary point with chart abscissa y'.
    double theta_of(double y1) const;
    double phi(double y1) const;
    double phi_prime(double y1) const;
    double slope_at_anchor() const { return phi_prime(0.0); }

    /// F and its inverse, both in chart coordinates.
    Vec2 flatten_inverse(const Vec2& y) const; // F^{-1}
    Vec2 flatten(const Vec2& x) const;         // F
    /// ∇F^{-1} evaluated at the chart point whose abscissa is y'.
    Mat2 grad_flatten_inverse(double y1) const;

    std::optional<HolderData> holder;

private:
    DomainGeometry domain_;
    double theta_;
    Vec2 anchor_;
    Vec2 e1_;
    Vec2 e2_;
    double radius_;
};

enum class Orientation { CounterClockwise, Clockwise };

/// Unit normal, unit tangent and probe direction at the chart anchor.
struct FrameAtP {
    Vec2 normal;  // outward, global coordinates
    Vec2 tangent; // global coordinates, per orientation
    Vec2 xi;      // chart coordinates
    Vec2 normal_chart;
    Vec2 tangent_chart;
    Orientation orientation = Orientation::CounterClockwise;
};

/// Builds the chart at ϑ_P. Starts at radius 0.5 and shrinks by 0.8 until the
/// graph property and |φ'| <= 4 hold; throws GeometryError below 1e-3 of the
/// diameter.
BoundaryChart build_chart(const DomainGeometry& domain, double theta_anchor);

/// ξ = ±(1 + s², s) for anchor slope s; sign fixed by the tangent orientation
/// through τ_P = -∇F^{-1}(P)ᵗ ξ / (1 + s²)^{1/2}.
Vec2 xi_for_slope(double slope, Orientation orientation);

/// A = ∇F^{-1} ∇F^{-1}ᵗ for a graph of slope s.
Mat2 metric_for_slope(double slope);

FrameAtP select_xi(const BoundaryChart& chart,
                   Orientation orientation = Orientation::CounterClockwise);

/// A(x) = ∇F^{-1}(F(x)) ∇F^{-1}(F(x))ᵗ at a point x of the flattened chart.
Mat2 pullback_metric(const BoundaryChart& chart, const Vec2& x);

} // namespace calderon
