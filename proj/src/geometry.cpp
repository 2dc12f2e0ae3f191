#include "calderon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "calderon/error.hpp"

namespace calderon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kArcTable = 4096;

} // namespace

DomainGeometry::DomainGeometry(Kind kind, std::vector<RadialMode> modes)
    : kind_(kind), modes_(std::move(modes))
{
    tabulate();
}

DomainGeometry DomainGeometry::unit_disk()
{
    return DomainGeometry(Kind::UnitDisk, {});
}

DomainGeometry DomainGeometry::perturbed_disk(std::vector<RadialMode> modes)
{
    for (const auto& m : modes) {
        if (m.k < 0)
            throw ConfigError("radial mode index must be nonnegative");
    }
    DomainGeometry g(Kind::PerturbedDisk, std::move(modes));
    if (g.rmin_ <= 0.5 || g.rmax_ >= 1.5)
        throw ConfigError("radial perturbation must satisfy |rho| < 1/2");
    return g;
}

double DomainGeometry::radius(double theta) const
{
    double r = 1.0;
    for (const auto& m : modes_)
        r += m.a * std::cos(m.k * theta) + m.b * std::sin(m.k * theta);
    return r;
}

double DomainGeometry::radius_d1(double theta) const
{
    double d = 0.0;
    for (const auto& m : modes_)
        d += m.k * (-m.a * std::sin(m.k * theta) + m.b * std::cos(m.k * theta));
    return d;
}

double DomainGeometry::radius_d2(double theta) const
{
    double d = 0.0;
    for (const auto& m : modes_) {
        const double k2 = double(m.k) * m.k;
        d -= k2 * (m.a * std::cos(m.k * theta) + m.b * std::sin(m.k * theta));
    }
    return d;
}

Vec2 DomainGeometry::point(double theta) const
{
    const double r = radius(theta);
    return {r * std::cos(theta), r * std::sin(theta)};
}

Vec2 DomainGeometry::tangent(double theta) const
{
    const double r = radius(theta);
    const double dr = radius_d1(theta);
    const double c = std::cos(theta), s = std::sin(theta);
    return {dr * c - r * s, dr * s + r * c};
}

Vec2 DomainGeometry::second_derivative(double theta) const
{
    const double r = radius(theta);
    const double dr = radius_d1(theta);
    const double ddr = radius_d2(theta);
    const double c = std::cos(theta), s = std::sin(theta);
    return {ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s};
}

Vec2 DomainGeometry::unit_tangent(double theta) const
{
    return tangent(theta).normalized();
}

Vec2 DomainGeometry::outward_normal(double theta) const
{
    const Vec2 t = unit_tangent(theta);
    return {t.y(), -t.x()};
}

void DomainGeometry::tabulate()
{
    cumulative_.assign(kArcTable + 1, 0.0);
    rmin_ = rmax_ = radius(0.0);
    if (kind_ == Kind::UnitDisk) {
        for (int i = 0; i <= kArcTable; ++i)
            cumulative_[i] = kTwoPi * i / kArcTable;
        length_ = kTwoPi;
        rmin_ = rmax_ = 1.0;
        return;
    }
    using boost::math::quadrature::gauss;
    const double h = kTwoPi / kArcTable;
    auto speed = [this](double t) { return tangent(t).norm(); };
    for (int i = 0; i < kArcTable; ++i) {
        const double a = i * h;
        cumulative_[i + 1] = cumulative_[i] + gauss<double, 10>::integrate(speed, a, a + h);
        for (int j = 0; j < 4; ++j) {
            const double r = radius(a + j * h / 4.0);
            rmin_ = std::min(rmin_, r);
            rmax_ = std::max(rmax_, r);
        }
    }
    length_ = cumulative_.back();
}

double DomainGeometry::arclength(double theta) const
{
    const double turns = std::floor(theta / kTwoPi);
    const double t = theta - turns * kTwoPi;
    if (kind_ == Kind::UnitDisk)
        return theta;
    const double h = kTwoPi / kArcTable;
    const int i = std::clamp(int(t / h), 0, kArcTable - 1);
    const double a = i * h;
    using boost::math::quadrature::gauss;
    auto speed = [this](double u) { return tangent(u).norm(); };
    const double partial = t > a ? gauss<double, 10>::integrate(speed, a, t) : 0.0;
    return turns * length_ + cumulative_[i] + partial;
}

double DomainGeometry::theta_at(double s) const
{
    if (kind_ == Kind::UnitDisk)
        return s;
    const double turns = std::floor(s / length_);
    const double r = s - turns * length_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
    const int i = std::clamp(int(it - cumulative_.begin()) - 1, 0, kArcTable - 1);
    const double h = kTwoPi / kArcTable;
    double t = i * h + h * (r - cumulative_[i]) / (cumulative_[i + 1] - cumulative_[i]);
    for (int iter = 0; iter < 20; ++iter) {
        const double step = (arclength(t) - r) / tangent(t).norm();
        t -= step;
        if (std::abs(step) < 1e-15)
            break;
    }
    return turns * kTwoPi + t;
}

double DomainGeometry::diameter() const
{
    if (kind_ == Kind::UnitDisk)
        return 2.0;
    double d = 0.0;
    constexpr int n = 512;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            d = std::max(d, (point(kTwoPi * i / n) - point(kTwoPi * j / n)).norm());
    return d;
}

bool DomainGeometry::contains(const Vec2& x) const
{
    const double r = x.norm();
    if (r == 0.0)
        return true;
    return r < radius(std::atan2(x.y(), x.x()));
}

// --- chart ---------------------------------------------------------------

BoundaryChart::BoundaryChart(const DomainGeometry& domain, double theta_anchor, double chart_radius)
    : domain_(domain), theta_(theta_anchor), radius_(chart_radius)
{
    anchor_ = domain_.point(theta_);
    e1_ = domain_.unit_tangent(theta_);
    e2_ = -domain_.outward_normal(theta_);
}

Vec2 BoundaryChart::to_chart(const Vec2& global) const
{
    const Vec2 d = global - anchor_;
    return {e1_.dot(d), e2_.dot(d)};
}

Vec2 BoundaryChart::to_global(const Vec2& chart) const
{
    return anchor_ + chart.x() * e1_ + chart.y() * e2_;
}

double BoundaryChart::theta_of(double y1) const
{
    // Initial guess from the unit-speed approximation at the anchor.
    double t = theta_ + y1 / domain_.tangent(theta_).norm();
    for (int iter = 0; iter < 50; ++iter) {
        const double g = e1_.dot(domain_.point(t) - anchor_) - y1;
        const double dg = e1_.dot(domain_.tangent(t));
        if (dg <= 0.0)
            throw GeometryError("boundary is not a graph over the chart axis");
        const double step = g / dg;
        t -= step;
        if (std::abs(step) < 1e-15)
            break;
    }
    return t;
}

double BoundaryChart::phi(double y1) const
{
    return e2_.dot(domain_.point(theta_of(y1)) - anchor_);
}

double BoundaryChart::phi_prime(double y1) const
{
    const Vec2 t = domain_.tangent(theta_of(y1));
    return e2_.dot(t) / e1_.dot(t);
}

Vec2 BoundaryChart::flatten_inverse(const Vec2& y) const
{
    return {y.x(), y.y() - phi(y.x())};
}

Vec2 BoundaryChart::flatten(const Vec2& x) const
{
    return {x.x(), x.y() + phi(x.x())};
}

Mat2 BoundaryChart::grad_flatten_inverse(double y1) const
{
    Mat2 m;
    m << 1.0, 0.0, -phi_prime(y1), 1.0;
    return m;
}

namespace {

bool graph_property_holds(const BoundaryChart& chart, double rho)
{
    const DomainGeometry& dom = chart.domain();
    const double t0 = chart.theta_anchor();
    const Vec2& e1 = chart.axis_tangent();
    const Vec2& e2 = chart.axis_normal();
    const Vec2& P = chart.anchor();
    const double step = 1e-3;

    // Walk away from the anchor in both directions until the abscissa leaves
    // [-rho, rho]; the walk must be monotone in y' with bounded slope.
    double lo = t0, hi = t0;
    for (int dir : {+1, -1}) {
        double t = t0;
        for (int n = 0;; ++n) {
            if (n > int(kTwoPi / step))
                return false;
            const Vec2 tan = dom.tangent(t);
            const double along = e1.dot(tan);
            if (along <= 0.0)
                return false;
            if (std::abs(e2.dot(tan) / along) > 4.0)
                return false;
            if (std::abs(e1.dot(dom.point(t) - P)) > rho)
                break;
            t += dir * step;
        }
        (dir > 0 ? hi : lo) = t;
    }
    if (hi - lo >= kTwoPi)
        return false;
    // Every boundary point off the graph arc must stay outside the ball.
    constexpr int samples = 4096;
    for (int i = 0; i < samples; ++i) {
        const double t = hi + (kTwoPi - (hi - lo)) * i / samples;
        if ((dom.point(t) - P).norm() <= rho)
            return false;
    }
    return true;
}

HolderData estimate_holder(const BoundaryChart& chart, double exponent)
{
    HolderData h{exponent, 0.0};
    const double s0 = chart.phi_prime(0.0);
    constexpr int n = 200;
    for (int i = 1; i <= n; ++i) {
        for (int sign : {-1, 1}) {
            const double x = sign * chart.radius() * i / n;
            const double q = std::abs(chart.phi_prime(x) - s0) / std::pow(std::abs(x), exponent);
            h.constant = std::max(h.constant, q);
        }
    }
    return h;
}

} // namespace

BoundaryChart build_chart(const DomainGeometry& domain, double theta_anchor)
{
    const double floor = 1e-3 * domain.diameter();
    for (double rho = 0.5; rho >= floor; rho *= 0.8) {
        BoundaryChart chart(domain, theta_anchor, rho);
        if (graph_property_holds(chart, rho)) {
            // Smooth boundaries are C^{1,θ} for every θ; record the θ = 1/2 bound.
            chart.holder = estimate_holder(chart, 0.5);
            return chart;
        }
    }
    throw GeometryError("chart radius fell below the floor of 1e-3 x diameter");
}

Vec2 xi_for_slope(double slope, Orientation orientation)
{
    // τ = -(1, s)/sqrt(1+s²) for ξ = +(1+s², s); counter-clockwise wants τ = +e_1 direction.
    const double sign = orientation == Orientation::CounterClockwise ? -1.0 : 1.0;
    return sign * Vec2(1.0 + slope * slope, slope);
}

Mat2 metric_for_slope(double slope)
{
    Mat2 g;
    g << 1.0, 0.0, -slope, 1.0;
    return g * g.transpose();
}

FrameAtP select_xi(const BoundaryChart& chart, Orientation orientation)
{
    const double s = chart.slope_at_anchor();
    const double scale = std::sqrt(1.0 + s * s);
    const Mat2 g = chart.grad_flatten_inverse(0.0);

    FrameAtP frame;
    frame.orientation = orientation;
    frame.xi = xi_for_slope(s, orientation);
    frame.tangent_chart = -(g.transpose() * frame.xi) / scale;
    // ∇F^{-1}ᵗ e_d / scale points into the domain; the outward normal is its negative.
    frame.normal_chart = -(g.transpose() * Vec2(0.0, 1.0)) / scale;
    frame.tangent = frame.tangent_chart.x() * chart.axis_tangent() +
                    frame.tangent_chart.y() * chart.axis_normal();
    frame.normal = frame.normal_chart.x() * chart.axis_tangent() +
                   frame.normal_chart.y() * chart.axis_normal();
    return frame;
}

Mat2 pullback_metric(const BoundaryChart& chart, const Vec2& x)
{
    const Mat2 g = chart.grad_flatten_inverse(x.x() + chart.anchor_parameter());
    return g * g.transpose();
}

} // namespace calderon
