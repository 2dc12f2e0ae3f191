#include "calderon/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "calderon/error.hpp"

namespace calderon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kRootAround = 16;
constexpr double kRootWidth = kTwoPi / kRootAround;
constexpr int kMaxLevel = 24;

std::atomic<std::uint64_t> g_mesh_counter{0};

// Quadtree cell (level, i, j): i counts around in ϑ (periodic), j counts
// inward in σ starting at the boundary.
struct Cell {
    int level;
    long i;
    long j;
};

std::uint64_t key_of(int level, long i, long j)
{
    return (std::uint64_t(level) << 58) | (std::uint64_t(i) << 29) | std::uint64_t(j);
}

Cell cell_of(std::uint64_t key)
{
    constexpr std::uint64_t mask = (std::uint64_t(1) << 29) - 1;
    return {int(key >> 58), long((key >> 29) & mask), long(key & mask)};
}

// Angular and depth extent of a refine zone in (ϑ, σ).
struct ZoneBox {
    double theta_center;
    double half_width; // >= π means all angles
    double sigma_max;
    double h;
};

class Builder {
public:
    Builder(const DomainGeometry& domain, const MeshRequest& req, int rows)
        : dom_(domain), req_(req), rows_(rows)
    {
        zones_.reserve(req.zones.size());
        for (const auto& z : req.zones)
            zones_.push_back(box_of(z));
    }

    // Returns false when the innermost root row had to be split.
    bool build()
    {
        std::vector<std::uint64_t> work;
        for (long i = 0; i < kRootAround; ++i)
            for (long j = 0; j < rows_; ++j) {
                leaves_.insert(key_of(0, i, j));
                work.push_back(key_of(0, i, j));
            }
        while (!work.empty()) {
            const std::uint64_t k = work.back();
            work.pop_back();
            const Cell c = cell_of(k);
            if (cell_size(c) > target_size(c)) {
                if (!split(c, &work))
                    return false;
            }
        }
        return balance();
    }

    TriMesh triangulate();

private:
    ZoneBox box_of(const RefineZone& z) const
    {
        const double r = z.r_refine;
        const double depth = z.layer_depth > 0.0 ? std::min(z.layer_depth, r) : r;
        // Radial depth exceeds normal depth by at most the secant of the angle
        // between the radial direction and the normal.
        double sec = 1.0;
        for (int k = 0; k < 720; ++k) {
            const double t = kTwoPi * k / 720.0;
            const double R = dom_.radius(t);
            const double dR = dom_.radius_d1(t);
            sec = std::max(sec, std::sqrt(R * R + dR * dR) / R);
        }
        const double rmin = dom_.min_radius();
        const double radial = 1.25 * depth * sec;
        ZoneBox b;
        b.theta_center = z.theta_anchor;
        b.h = z.h;
        b.sigma_max = radial < rmin ? -std::log(1.0 - radial / rmin) : 1e300;
        const double inner = radial < rmin ? rmin - radial : 0.0;
        b.half_width = (inner > 0.0 && r < inner) ? 1.1 * std::asin(r / inner) + 1e-12 : 4.0;
        return b;
    }

    double h_at(int level) const { return kRootWidth / double(1L << level); }

    Vec2 map(double theta, double sigma) const
    {
        const double r = dom_.radius(theta) * std::exp(-sigma);
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    double cell_size(const Cell& c) const
    {
        const double h = h_at(c.level);
        const double t0 = c.i * h, s0 = c.j * h;
        const Vec2 a = map(t0, s0), b = map(t0 + h, s0), cc = map(t0 + h, s0 + h), d = map(t0, s0 + h);
        const Vec2 m = map(t0 + 0.5 * h, s0 + 0.5 * h);
        double size = std::max({(a - b).norm(), (b - cc).norm(), (cc - d).norm(), (d - a).norm()});
        size = std::max({size, (m - a).norm(), (m - b).norm(), (m - cc).norm(), (m - d).norm()});
        return size;
    }

    double target_size(const Cell& c) const
    {
        const double h = h_at(c.level);
        const double t0 = c.i * h, t1 = t0 + h, s0 = c.j * h;
        double target = req_.h_far;
        for (const auto& z : zones_) {
            if (s0 > z.sigma_max || z.h >= target)
                continue;
            if (z.half_width < std::numbers::pi) {
                // Periodic interval overlap of [t0, t1] and the zone's arc.
                const double mid = 0.5 * (t0 + t1);
                double d = std::remainder(mid - z.theta_center, kTwoPi);
                if (std::abs(d) > z.half_width + 0.5 * h)
                    continue;
            }
            target = z.h;
        }
        return target;
    }

    bool is_leaf(int level, long i, long j) const { return leaves_.count(key_of(level, i, j)) != 0; }

    long around(int level) const { return kRootAround * (1L << level); }
    long depth_cells(int level) const { return rows_ * (1L << level); }

    // True when the region of cell (level, i, j) is split below that level.
    bool subdivided(int level, long i, long j) const
    {
        if (j < 0 || j >= depth_cells(level))
            return false;
        i = ((i % around(level)) + around(level)) % around(level);
        for (int l = level; l >= 0; --l)
            if (is_leaf(l, i >> (level - l), j >> (level - l)))
                return false;
        return true;
    }

    bool split(const Cell& c, std::vector<std::uint64_t>* work)
    {
        if (c.level == 0 && c.j == rows_ - 1)
            return false;
        if (c.level >= kMaxLevel)
            throw BudgetError("mesh refinement exceeds the maximum quadtree depth; requested h_near is too small");
        leaves_.erase(key_of(c.level, c.i, c.j));
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
                const std::uint64_t k = key_of(c.level + 1, 2 * c.i + di, 2 * c.j + dj);
                leaves_.insert(k);
                if (work)
                    work->push_back(k);
            }
        if (long(leaves_.size()) * 4 > req_.max_triangles) {
            double h_near = req_.h_far;
            for (const auto& z : req_.zones)
                h_near = std::min(h_near, z.h);
            throw BudgetError("mesh exceeds the element budget of " + std::to_string(req_.max_triangles) +
                              " triangles at requested h_near = " + std::to_string(h_near));
        }
        return true;
    }

    // A leaf violates 2:1 balance when a neighbor's children along the shared
    // side are themselves split.
    bool unbalanced(const Cell& c) const
    {
        const int l = c.level + 1;
        const long i0 = 2 * c.i, j0 = 2 * c.j;
        const long n = around(l);
        auto split_child = [&](long i, long j) { return subdivided(l, i, j) && !is_leaf(l, ((i % n) + n) % n, j); };
        // Children of the neighbor adjacent to our side, at level l.
        return split_child(i0 - 1, j0) || split_child(i0 - 1, j0 + 1) || split_child(i0 + 2, j0) ||
               split_child(i0 + 2, j0 + 1) || split_child(i0, j0 - 1) || split_child(i0 + 1, j0 - 1) ||
               split_child(i0, j0 + 2) || split_child(i0 + 1, j0 + 2);
    }

    bool balance()
    {
        std::vector<std::uint64_t> work(leaves_.begin(), leaves_.end());
        std::sort(work.begin(), work.end());
        while (!work.empty()) {
            const std::uint64_t k = work.back();
            work.pop_back();
            if (!leaves_.count(k))
                continue;
            const Cell c = cell_of(k);
            if (!unbalanced(c))
                continue;
            if (!split(c, &work))
                return false;
            // Coarser neighbors may now be out of balance with the children.
            const long n = around(c.level);
            const long nb[4][2] = {{c.i - 1, c.j}, {c.i + 1, c.j}, {c.i, c.j - 1}, {c.i, c.j + 1}};
            for (const auto& q : nb) {
                if (q[1] < 0 || q[1] >= depth_cells(c.level))
                    continue;
                const long qi = ((q[0] % n) + n) % n;
                for (int l = c.level; l >= 0; --l) {
                    const std::uint64_t a = key_of(l, qi >> (c.level - l), q[1] >> (c.level - l));
                    if (leaves_.count(a)) {
                        work.push_back(a);
                        break;
                    }
                }
            }
        }
        return true;
    }

    const DomainGeometry& dom_;
    const MeshRequest& req_;
    int rows_;
    std::vector<ZoneBox> zones_;
    std::unordered_set<std::uint64_t> leaves_;
};

TriMesh Builder::triangulate()
{
    std::vector<std::uint64_t> sorted(leaves_.begin(), leaves_.end());
    std::sort(sorted.begin(), sorted.end());
    int max_level = 0;
    for (auto k : sorted)
        max_level = std::max(max_level, cell_of(k).level);
    const int lk = max_level + 1; // lattice fine enough for cell centers
    const long period = around(lk);
    const double dl = kRootWidth / double(1L << lk);

    TriMesh mesh;
    std::unordered_map<std::uint64_t, int> index;
    index.reserve(sorted.size() * 3);
    auto vertex = [&](long I, long J) {
        I = ((I % period) + period) % period;
        const std::uint64_t key = (std::uint64_t(I) << 32) | std::uint64_t(J);
        auto [it, inserted] = index.try_emplace(key, int(mesh.vertices.size()));
        if (inserted) {
            mesh.vertices.push_back(map(double(I) * dl, double(J) * dl));
            mesh.on_boundary.push_back(J == 0 ? 1 : 0);
            if (J == 0) {
                mesh.boundary_vertices.push_back(it->second);
                mesh.boundary_theta.push_back(double(I) * dl);
            }
        }
        return it->second;
    };
    auto emit = [&](int a, int b, int c) {
        const Vec2 &p = mesh.vertices[a], &q = mesh.vertices[b], &r = mesh.vertices[c];
        const double cross = (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
        if (cross > 0.0)
            mesh.triangles.push_back({a, b, c});
        else
            mesh.triangles.push_back({a, c, b});
    };

    for (auto k : sorted) {
        const Cell c = cell_of(k);
        const long sc = 1L << (lk - c.level);
        const long I0 = c.i * sc, J0 = c.j * sc, I1 = I0 + sc, J1 = J0 + sc, half = sc / 2;
        const int center = vertex(I0 + half, J0 + half);
        // Closed loop around the cell with hanging midpoints where the
        // neighbor across a side is finer.
        std::vector<int> loop;
        loop.push_back(vertex(I0, J0));
        if (subdivided(c.level, c.i, c.j - 1))
            loop.push_back(vertex(I0 + half, J0));
        loop.push_back(vertex(I1, J0));
        if (subdivided(c.level, c.i + 1, c.j))
            loop.push_back(vertex(I1, J0 + half));
        loop.push_back(vertex(I1, J1));
        if (subdivided(c.level, c.i, c.j + 1))
            loop.push_back(vertex(I0 + half, J1));
        loop.push_back(vertex(I0, J1));
        if (subdivided(c.level, c.i - 1, c.j))
            loop.push_back(vertex(I0, J0 + half));
        for (size_t m = 0; m < loop.size(); ++m)
            emit(center, loop[m], loop[(m + 1) % loop.size()]);
    }

    // Central fan closing the innermost ring of root cells.
    const long ring_j = long(rows_) << lk;
    const long root = 1L << lk;
    mesh.vertices.push_back(Vec2::Zero());
    mesh.on_boundary.push_back(0);
    const int origin = int(mesh.vertices.size()) - 1;
    for (long i = 0; i < kRootAround; ++i)
        emit(origin, vertex(i * root, ring_j), vertex((i + 1) * root, ring_j));

    // Boundary ordering by ϑ, with arclength.
    std::vector<size_t> order(mesh.boundary_vertices.size());
    for (size_t m = 0; m < order.size(); ++m)
        order[m] = m;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return mesh.boundary_theta[a] < mesh.boundary_theta[b]; });
    std::vector<int> bv(order.size());
    std::vector<double> bt(order.size());
    for (size_t m = 0; m < order.size(); ++m) {
        bv[m] = mesh.boundary_vertices[order[m]];
        bt[m] = mesh.boundary_theta[order[m]];
    }
    mesh.boundary_vertices = std::move(bv);
    mesh.boundary_theta = std::move(bt);
    mesh.boundary_arclength.resize(mesh.boundary_theta.size());
    for (size_t m = 0; m < mesh.boundary_theta.size(); ++m)
        mesh.boundary_arclength[m] = dom_.arclength(mesh.boundary_theta[m]);

    mesh.diameters.resize(mesh.triangles.size());
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &cc = mesh.vertices[tri[2]];
        mesh.diameters[t] = std::max({(a - b).norm(), (b - cc).norm(), (cc - a).norm()});
    }
    mesh.grading.h_far = req_.h_far;
    mesh.grading.zones = req_.zones;
    mesh.grading.root_rows = rows_;
    mesh.grading.max_level = max_level;
    return mesh;
}

} // namespace

double TriMesh::area(int t) const
{
    const auto& tri = triangles[t];
    const Vec2 u = vertices[tri[1]] - vertices[tri[0]];
    const Vec2 v = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * (u.x() * v.y() - u.y() * v.x());
}

double TriMesh::min_angle_degrees(int t) const
{
    const auto& tri = triangles[t];
    double best = 180.0;
    for (int k = 0; k < 3; ++k) {
        const Vec2 u = vertices[tri[(k + 1) % 3]] - vertices[tri[k]];
        const Vec2 v = vertices[tri[(k + 2) % 3]] - vertices[tri[k]];
        const double c = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
        best = std::min(best, std::acos(c) * 180.0 / std::numbers::pi);
    }
    return best;
}

double TriMesh::total_area() const
{
    double a = 0.0;
    for (int t = 0; t < int(triangles.size()); ++t)
        a += area(t);
    return a;
}

double TriMesh::max_diameter() const
{
    return diameters.empty() ? 0.0 : *std::max_element(diameters.begin(), diameters.end());
}

TriMesh generate_mesh(const DomainGeometry& domain, const MeshRequest& request)
{
    if (!(request.h_far > 0.0))
        throw ConfigError("h_far must be positive");
    for (const auto& z : request.zones) {
        if (!(z.h > 0.0) || !(z.r_refine > 0.0))
            throw ConfigError("refine zone needs positive h_near and r_refine");
        if (z.h > request.h_far)
            throw ConfigError("h_near must not exceed h_far");
    }
    // Innermost ring small enough that the central fan meets h_far.
    int rows = std::max(2, int(std::ceil(std::log(domain.max_radius() / request.h_far) / kRootWidth)));
    for (;; ++rows) {
        Builder b(domain, request, rows);
        if (b.build()) {
            TriMesh mesh = b.triangulate();
            mesh.id = ++g_mesh_counter;
            return mesh;
        }
    }
}

TriMesh generate_mesh(const DomainGeometry& domain, double h_far, double h_near, double theta_anchor,
                      double r_refine, double layer_depth, long max_triangles)
{
    MeshRequest req;
    req.h_far = h_far;
    req.max_triangles = max_triangles;
    req.zones.push_back({theta_anchor, r_refine, layer_depth, h_near});
    return generate_mesh(domain, req);
}

Resolution required_resolution(double N, double xi_prime_norm, double ppw, double M, double h_far)
{
    const double k = N * xi_prime_norm;
    Resolution r;
    r.h_near = std::min(h_far, kTwoPi / (k * ppw));
    r.r_refine = 2.0 / M + h_far;
    r.layer_depth = std::min(r.r_refine, 10.0 / k);
    return r;
}

void write_mesh(std::ostream& out, const TriMesh& mesh)
{
    out << "# vertices " << mesh.vertices.size() << " triangles " << mesh.triangles.size() << '\n';
    out << "# v <index> <x> <y> <boundary>\n";
    char buf[128];
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        std::snprintf(buf, sizeof buf, "v %zu %.17g %.17g %d\n", v, mesh.vertices[v].x(), mesh.vertices[v].y(),
                      int(mesh.on_boundary[v]));
        out << buf;
    }
    out << "# t <index> <v0> <v1> <v2>\n";
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        std::snprintf(buf, sizeof buf, "t %zu %d %d %d\n", t, tri[0], tri[1], tri[2]);
        out << buf;
    }
}

} // namespace calderon
