#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "calderon/error.hpp"
#include "calderon/mesh.hpp"

using namespace calderon;

namespace {

void check_mesh_invariants(const DomainGeometry& d, const TriMesh& m)
{
    double min_angle = 180.0;
    for (int t = 0; t < int(m.triangles.size()); ++t) {
        REQUIRE(m.area(t) > 0.0);
        min_angle = std::min(min_angle, m.min_angle_degrees(t));
    }
    CHECK(min_angle >= 20.0);
    for (size_t k = 0; k < m.boundary_vertices.size(); ++k) {
        const Vec2& v = m.vertices[m.boundary_vertices[k]];
        CHECK((v - d.point(m.boundary_theta[k])).norm() < 1e-10);
    }
    // conforming: every interior edge is shared by exactly two triangles with
    // opposite orientation, boundary edges by one
    std::map<std::pair<int, int>, int> edges;
    for (const auto& tri : m.triangles)
        for (int e = 0; e < 3; ++e)
            ++edges[{tri[e], tri[(e + 1) % 3]}];
    long open = 0;
    for (const auto& [e, count] : edges) {
        REQUIRE(count == 1);
        if (!edges.count({e.second, e.first})) {
            ++open;
            CHECK(m.on_boundary[e.first]);
            CHECK(m.on_boundary[e.second]);
        }
    }
    CHECK(open == long(m.boundary_vertices.size()));
}

} // namespace

TEST_CASE("uniform disk mesh covers the disk")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    const TriMesh m = generate_mesh(d, 0.1, 0.1, 0.0, 0.1);
    CHECK(m.max_diameter() <= 0.1);
    CHECK(std::abs(m.total_area() - std::numbers::pi) <= 0.01 * std::numbers::pi);
    check_mesh_invariants(d, m);
}

TEST_CASE("graded mesh respects both sizes and halving h_near halves diameters near P")
{
    const DomainGeometry d = DomainGeometry::perturbed_disk({{3, 0.1, 0.0}, {2, 0.0, 0.05}});
    const double theta = 0.7;
    const Vec2 P = d.point(theta);
    auto near_max = [&](const TriMesh& m, double r) {
        double h = 0.0;
        for (int t = 0; t < int(m.triangles.size()); ++t) {
            bool inside = true;
            for (int v : m.triangles[t])
                inside = inside && (m.vertices[v] - P).norm() <= r;
            if (inside)
                h = std::max(h, m.diameters[t]);
        }
        return h;
    };
    const TriMesh a = generate_mesh(d, 0.2, 0.02, theta, 0.15);
    const TriMesh b = generate_mesh(d, 0.2, 0.01, theta, 0.15);
    CHECK(a.max_diameter() <= 0.2);
    CHECK(near_max(a, 0.15) <= 0.02);
    CHECK(near_max(b, 0.15) <= 0.01);
    CHECK(near_max(b, 0.15) == doctest::Approx(0.5 * near_max(a, 0.15)).epsilon(0.2));
    check_mesh_invariants(d, a);
    check_mesh_invariants(d, b);
}

TEST_CASE("boundary layer zone only refines near the boundary")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    const TriMesh full = generate_mesh(d, 0.1, 0.01, 0.0, 0.3);
    const TriMesh layer = generate_mesh(d, 0.1, 0.01, 0.0, 0.3, 0.03);
    CHECK(layer.triangles.size() < full.triangles.size());
    check_mesh_invariants(d, layer);
}

TEST_CASE("mesh requests are validated")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    CHECK_THROWS_AS(generate_mesh(d, 0.05, 0.1, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(generate_mesh(d, -1.0, -1.0, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(generate_mesh(d, 0.1, 0.001, 0.0, 0.5, 0.0, 10000), BudgetError);
    try {
        generate_mesh(d, 0.1, 0.001, 0.0, 0.5, 0.0, 10000);
    } catch (const BudgetError& e) {
        CHECK(std::string(e.what()).find("h_near") != std::string::npos);
    }
}

TEST_CASE("required resolution")
{
    const Resolution r = required_resolution(100, 1.0, 10, 10, 0.05);
    CHECK(r.h_near == doctest::Approx(2 * std::numbers::pi / 1000).epsilon(1e-12));
    CHECK(r.h_near == doctest::Approx(6.28e-3).epsilon(1e-3));
    CHECK(r.r_refine == doctest::Approx(2.0 / 10 + 0.05));
    const Resolution low = required_resolution(1, 1.0, 10, 1, 0.05);
    CHECK(low.h_near == doctest::Approx(0.05));
    const Resolution twice = required_resolution(100, 1.0, 20, 10, 0.05);
    CHECK(twice.h_near == doctest::Approx(0.5 * r.h_near));
}

TEST_CASE("ascii dump lists vertices then triangles")
{
    const TriMesh m = generate_mesh(DomainGeometry::unit_disk(), 0.4, 0.4, 0.0, 0.1);
    std::ostringstream out;
    write_mesh(out, m);
    std::istringstream in(out.str());
    std::string line;
    size_t v = 0, t = 0;
    while (std::getline(in, line)) {
        if (line.rfind("v ", 0) == 0) {
            CHECK(t == 0);
            ++v;
        } else if (line.rfind("t ", 0) == 0) {
            ++t;
        }
    }
    CHECK(v == m.vertices.size());
    CHECK(t == m.triangles.size());
}

TEST_CASE("mesh ids are unique")
{
    const DomainGeometry d = DomainGeometry::unit_disk();
    CHECK(generate_mesh(d, 0.3, 0.3, 0.0, 0.1).id != generate_mesh(d, 0.3, 0.3, 0.0, 0.1).id);
}
