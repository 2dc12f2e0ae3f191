#include "calderon/conductivity.hpp"

#include <cmath>

#include "calderon/error.hpp"

namespace calderon {

namespace {

double param(const FieldParams& p, const std::string& key, double fallback)
{
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

} // namespace

ConductivityField builtin_field(const std::string& name, const FieldParams& params)
{
    constexpr double R = kFieldBoundRadius;
    ConductivityField f;
    f.tag = name;

    if (name == "constant") {
        const double c = param(params, "c", 1.0);
        f.value = [c](const Vec2&) { return c; };
        f.gradient = [](const Vec2&) { return Vec2::Zero().eval(); };
        f.lower_bound = f.sup_bound = c;
    } else if (name == "affine") {
        const double a = param(params, "a", 1.0);
        const Vec2 b(param(params, "bx", 0.0), param(params, "by", 0.0));
        f.value = [a, b](const Vec2& x) { return a + b.dot(x); };
        f.gradient = [b](const Vec2&) { return b; };
        f.lower_bound = a - b.norm() * R;
        f.sup_bound = a + b.norm() * R;
        f.lipschitz_bound = b.norm();
    } else if (name == "exponential") {
        const double c = param(params, "c", 1.0);
        const Vec2 alpha(param(params, "ax", 0.0), param(params, "ay", 0.0));
        f.value = [c, alpha](const Vec2& x) { return c * std::exp(alpha.dot(x)); };
        f.gradient = [c, alpha](const Vec2& x) { return (c * std::exp(alpha.dot(x)) * alpha).eval(); };
        const double grow = std::exp(alpha.norm() * R);
        f.lower_bound = c / grow;
        f.sup_bound = c * grow;
        f.lipschitz_bound = std::abs(c) * alpha.norm() * grow;
        f.gradient_lipschitz = std::abs(c) * alpha.squaredNorm() * grow;
    } else if (name == "radial_bump") {
        const double c = param(params, "c", 1.0);
        const double amp = param(params, "amplitude", 0.0);
        const Vec2 center(param(params, "x0", 0.0), param(params, "y0", 0.0));
        const double w = param(params, "width", 0.25);
        if (w <= 0.0)
            throw ConfigError("radial_bump width must be positive");
        f.value = [=](const Vec2& x) {
            return c + amp * std::exp(-(x - center).squaredNorm() / (2.0 * w * w));
        };
        f.gradient = [=](const Vec2& x) {
            const Vec2 d = x - center;
            return (-amp / (w * w) * std::exp(-d.squaredNorm() / (2.0 * w * w)) * d).eval();
        };
        f.lower_bound = amp >= 0.0 ? c : c + amp;
        f.sup_bound = amp >= 0.0 ? c + amp : c;
        f.lipschitz_bound = std::abs(amp) / w * std::exp(-0.5);
        f.gradient_lipschitz = std::abs(amp) / (w * w);
    } else if (name == "trigonometric") {
        const double c = param(params, "c", 1.0);
        const double amp = param(params, "amplitude", 0.0);
        const Vec2 k(param(params, "kx", 0.0), param(params, "ky", 0.0));
        const double phase = param(params, "phase", 0.0);
        f.value = [=](const Vec2& x) { return c + amp * std::sin(k.dot(x) + phase); };
        f.gradient = [=](const Vec2& x) { return (amp * std::cos(k.dot(x) + phase) * k).eval(); };
        f.lower_bound = c - std::abs(amp);
        f.sup_bound = c + std::abs(amp);
        f.lipschitz_bound = std::abs(amp) * k.norm();
        f.gradient_lipschitz = std::abs(amp) * k.squaredNorm();
    } else {
        throw ConfigError("unknown conductivity field '" + name + "'");
    }

    if (!(f.lower_bound > 0.0))
        throw ConfigError("conductivity '" + name + "' has nonpositive lower bound");
    return f;
}

BoundaryTrace boundary_trace(const ConductivityField& field, const Vec2& point,
                             const Vec2& outward_normal, const Vec2& tangent)
{
    const Vec2 g = field.gradient(point);
    return {field.value(point), g.dot(outward_normal), g.dot(tangent)};
}

} // namespace calderon
