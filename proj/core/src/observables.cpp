#include "statflow/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace statflow {

ElementAverages element_average(const FieldCoefficients& velocity) {
    if (!velocity.velocity_space)
        throw std::invalid_argument("element_average: expected a velocity field");
    const VelocitySpace& sp = *velocity.velocity_space;
    const Mesh2D& mesh = sp.mesh();
    ElementAverages out;
    out.mesh = &mesh;
    out.values.resize(mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = sp.volume_rule(e);
        const ElementMap map(mesh, e);
        Vec2 acc{0.0, 0.0};
        for (int q = 0; q < vr.size(); ++q)
            acc += eval_velocity(velocity, e, vr.points[q]) *
                   (vr.weights[q] * map.det_jacobian(vr.points[q]));
        out.values[e] = acc / mesh.element_areas[e];
    }
    return out;
}

FieldCoefficients ensemble_mean(const Ensemble& ensemble) {
    if (ensemble.size() < 1) throw std::invalid_argument("ensemble_mean: empty ensemble");
    FieldCoefficients mean = make_velocity_field(*ensemble.space, ensemble.time);
    for (const auto& member : ensemble.members)
        axpy(1.0, member.field.values, mean.values);
    scale(1.0 / ensemble.size(), mean.values);
    return mean;
}

Vec2 ensemble_variance_at(const Ensemble& ensemble, int element, Vec2 ref) {
    const int m = ensemble.size();
    if (m < 2) throw std::invalid_argument("ensemble_variance: need at least two members");
    Vec2 sum{0.0, 0.0}, sum_sq{0.0, 0.0};
    for (const auto& member : ensemble.members) {
        const Vec2 v = eval_velocity(member.field, element, ref);
        sum += v;
        sum_sq += Vec2{v.x * v.x, v.y * v.y};
    }
    const Vec2 mean = sum / m;
    const Vec2 mean_sq = sum_sq / m;
    const double c = static_cast<double>(m) / (m - 1);
    return {c * (mean_sq.x - mean.x * mean.x), c * (mean_sq.y - mean.y * mean.y)};
}

PointField ensemble_mean_field(const Ensemble& ensemble, const PointLocator& locator) {
    auto mean = std::make_shared<FieldCoefficients>(ensemble_mean(ensemble));
    return [mean, &locator](Vec2 x) { return eval_velocity_at(*mean, locator, x); };
}

PointField ensemble_variance_field(const Ensemble& ensemble, const PointLocator& locator) {
    if (ensemble.size() < 2)
        throw std::invalid_argument("ensemble_variance: need at least two members");
    const Ensemble* ens = &ensemble;
    return [ens, &locator](Vec2 x) {
        const auto loc = locator.locate(x);
        return ensemble_variance_at(*ens, loc.element, loc.ref);
    };
}

namespace {

double integrate_squared_diff(const PointField& a, const PointField* b, const Mesh2D& mesh,
                              int quad_degree) {
    const QuadratureRule tri = triangle_rule(quad_degree);
    const QuadratureRule quad = quad_rule(quad_degree);
    double acc = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = mesh.is_triangle(e) ? tri : quad;
        const ElementMap map(mesh, e);
        for (int q = 0; q < vr.size(); ++q) {
            const Vec2 x = map.map(vr.points[q]);
            const Vec2 diff = b ? a(x) - (*b)(x) : a(x);
            acc += vr.weights[q] * map.det_jacobian(vr.points[q]) * diff.norm2();
        }
    }
    return std::sqrt(acc);
}

} // namespace

double cauchy_error_l2(const PointField& a, const PointField& b, const Mesh2D& quad_mesh,
                       int quad_degree) {
    return integrate_squared_diff(a, &b, quad_mesh, quad_degree);
}

double l2_norm(const PointField& f, const Mesh2D& quad_mesh, int quad_degree) {
    return integrate_squared_diff(f, nullptr, quad_mesh, quad_degree);
}

int HashGrid::n_entries() const {
    int n = 0;
    for (const auto& c : cells) n += static_cast<int>(c.size());
    return n;
}

std::pair<int, int> HashGrid::cell_of(Vec2 p) const {
    const int i = static_cast<int>(std::floor(nx1 * (p.x - domain.lo.x) / domain.width()));
    const int j = static_cast<int>(std::floor(nx2 * (p.y - domain.lo.y) / domain.height()));
    if (i < 0 || i >= nx1 || j < 0 || j >= nx2)
        throw std::invalid_argument("HashGrid: centroid (" + std::to_string(p.x) + ", " +
                                    std::to_string(p.y) + ") outside the domain rectangle");
    return {i, j};
}

int choose_grid_size(double side, double r) {
    if (!(side > 0.0) || !(r > 0.0))
        throw std::invalid_argument("choose_grid_size: side and r must be positive");
    return std::max(3, static_cast<int>(std::floor(side / r)));
}

HashGrid make_hash_table(const Rect& domain, const Mesh2D& mesh, int nx1, int nx2) {
    if (nx1 < 1 || nx2 < 1)
        throw std::invalid_argument("make_hash_table: grid dimensions must be positive");
    HashGrid grid;
    grid.domain = domain;
    grid.nx1 = nx1;
    grid.nx2 = nx2;
    grid.cells.assign(static_cast<std::size_t>(nx1) * nx2, {});
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const Vec2 c = mesh.centroid(e);
        const auto [i, j] = grid.cell_of(c);
        grid.cells[static_cast<std::size_t>(j) * nx1 + i].push_back(
            {e, mesh.element_areas[e], c, Vec2{0.0, 0.0}});
    }
    return grid;
}

void update_hash_table(HashGrid& grid, const ElementAverages& averages) {
    for (int e = 0; e < static_cast<int>(averages.values.size()); ++e) {
        const Vec2 c = averages.mesh->centroid(e);
        const auto [i, j] = grid.cell_of(c);
        auto& cell = grid.cells[static_cast<std::size_t>(j) * grid.nx1 + i];
        bool found = false;
        for (auto& entry : cell)
            if (entry.element == e) {
                entry.velocity = averages.values[e];
                found = true;
                break;
            }
        if (!found)
            throw std::runtime_error("update_hash_table: element " + std::to_string(e) +
                                     " missing from its cell (corrupt table)");
    }
}

double structure_function_of_sample(const HashGrid& grid, double r, int p) {
    if (grid.nx1 < 3 || grid.nx2 < 3)
        throw std::invalid_argument(
            "structure_function_of_sample: grid has no interior cells (need N >= 3)");
    if (!(r > 0.0) || p < 1)
        throw std::invalid_argument("structure_function_of_sample: need r > 0 and p >= 1");
    const double cell_w = grid.domain.width() / grid.nx1;
    const double cell_h = grid.domain.height() / grid.nx2;
    if (cell_w < r * (1.0 - 1e-12) || cell_h < r * (1.0 - 1e-12))
        throw std::invalid_argument(
            "structure_function_of_sample: cell size must be >= the offset r");

    double s = 0.0;
    for (int j = 1; j <= grid.nx2 - 2; ++j) {
        for (int i = 1; i <= grid.nx1 - 2; ++i) {
            for (const auto& k : grid.cell(i, j)) {
                double sum = 0.0, w = 0.0;
                for (int jj = j - 1; jj <= j + 1; ++jj) {
                    for (int ii = i - 1; ii <= i + 1; ++ii) {
                        for (const auto& kp : grid.cell(ii, jj)) {
                            if (std::abs(k.centroid.x - kp.centroid.x) <= r &&
                                std::abs(k.centroid.y - kp.centroid.y) <= r) {
                                sum += kp.area * (std::pow(std::abs(k.velocity.x - kp.velocity.x),
                                                           p) +
                                                  std::pow(std::abs(k.velocity.y - kp.velocity.y),
                                                           p));
                                w += kp.area;
                            }
                        }
                    }
                }
                // The element itself always passes its own box test, so w > 0.
                s += k.area * (sum / w);
            }
        }
    }
    return s;
}

double structure_function_ensemble(const Rect& domain, const Mesh2D& mesh, int nx1, int nx2,
                                   std::span<const ElementAverages> members, double r, int p,
                                   int workers) {
    if (members.empty())
        throw std::invalid_argument("structure_function_ensemble: empty ensemble");
    const int m = static_cast<int>(members.size());
    std::vector<double> per_member(m, 0.0);
    parallel_for_dynamic(m, workers, [&](int i) {
        HashGrid grid = make_hash_table(domain, mesh, nx1, nx2);
        update_hash_table(grid, members[i]);
        per_member[i] = structure_function_of_sample(grid, r, p);
    });
    // Ordered reduction, then one root after the sum.
    double acc = 0.0;
    for (double v : per_member) acc += v;
    return std::pow(acc / m, 1.0 / p);
}

namespace {

double atom_distance_pow(std::span<const double> a, std::span<const double> b, int p) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    const double d = std::sqrt(sq);
    return p == 1 ? d : std::pow(d, p);
}

void check_measure(const WeightedAtoms& m, const char* name) {
    if (m.size() < 1) throw std::invalid_argument(std::string("emd_atoms: empty measure ") + name);
    if (static_cast<int>(m.coords.size()) != m.size() * m.dim)
        throw std::invalid_argument(std::string("emd_atoms: coords/weights mismatch in ") + name);
    double total = 0.0;
    for (double w : m.weights) {
        if (w < -1e-15) throw std::invalid_argument("emd_atoms: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument(std::string("emd_atoms: weights of ") + name +
                                    " must sum to 1 (invalid measure)");
}

} // namespace

double emd_atoms(const WeightedAtoms& a, const WeightedAtoms& b, int p) {
    check_measure(a, "a");
    check_measure(b, "b");
    if (a.dim != b.dim) throw std::invalid_argument("emd_atoms: dimension mismatch");
    if (p < 1) throw std::invalid_argument("emd_atoms: order must be >= 1");

    const int n = a.size(), m = b.size();
    std::vector<double> cost(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            cost[static_cast<std::size_t>(i) * m + j] = atom_distance_pow(a.atom(i), b.atom(j), p);

    // Successive shortest paths with potentials; nodes: 0..n-1 supplies,
    // n..n+m-1 demands. Flow f is dense (desk-scale atom counts).
    std::vector<double> rem_a = a.weights, rem_b = b.weights;
    std::vector<double> flow(static_cast<std::size_t>(n) * m, 0.0);
    std::vector<double> pot(n + m, 0.0);
    const double eps = 1e-14;
    double remaining = 1.0;

    while (remaining > eps) {
        // Dijkstra over the residual graph from all supplies with rem > 0.
        const int nn = n + m;
        std::vector<double> dist(nn, std::numeric_limits<double>::infinity());
        std::vector<int> parent(nn, -1);
        std::vector<char> done(nn, 0);
        for (int i = 0; i < n; ++i)
            if (rem_a[i] > eps) dist[i] = 0.0;
        for (int it = 0; it < nn; ++it) {
            int u = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int v = 0; v < nn; ++v)
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    u = v;
                }
            if (u < 0) break;
            done[u] = 1;
            if (u < n) {
                for (int j = 0; j < m; ++j) {
                    if (done[n + j]) continue;
                    const double rc = cost[static_cast<std::size_t>(u) * m + j] - pot[u] + pot[n + j];
                    if (dist[u] + rc < dist[n + j] - 1e-18) {
                        dist[n + j] = dist[u] + rc;
                        parent[n + j] = u;
                    }
                }
            } else {
                const int j = u - n;
                for (int i = 0; i < n; ++i) {
                    if (done[i]) continue;
                    if (flow[static_cast<std::size_t>(i) * m + j] <= eps) continue;
                    const double rc = -cost[static_cast<std::size_t>(i) * m + j] - pot[u] + pot[i];
                    if (dist[u] + rc < dist[i] - 1e-18) {
                        dist[i] = dist[u] + rc;
                        parent[i] = u;
                    }
                }
            }
        }
        // Cheapest reachable demand with remaining capacity.
        int sink = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j)
            if (rem_b[j] > eps && dist[n + j] < best) {
                best = dist[n + j];
                sink = n + j;
            }
        if (sink < 0)
            throw std::runtime_error("emd_atoms: transportation search stalled");

        for (int v = 0; v < nn; ++v)
            if (std::isfinite(dist[v])) pot[v] -= dist[v];

        // Bottleneck along the path.
        double delta = rem_b[sink - n];
        for (int v = sink; parent[v] >= 0; v = parent[v]) {
            const int u = parent[v];
            if (u < n && v >= n) {
                // forward arc: no capacity bound
            } else {
                delta = std::min(delta, flow[static_cast<std::size_t>(v) * m + (u - n)]);
            }
        }
        {
            int v = sink;
            while (parent[v] >= 0) v = parent[v];
            delta = std::min(delta, rem_a[v]);
        }
        // Augment.
        for (int v = sink; parent[v] >= 0; v = parent[v]) {
            const int u = parent[v];
            if (u < n && v >= n)
                flow[static_cast<std::size_t>(u) * m + (v - n)] += delta;
            else
                flow[static_cast<std::size_t>(v) * m + (u - n)] -= delta;
        }
        {
            int v = sink;
            while (parent[v] >= 0) v = parent[v];
            rem_a[v] -= delta;
        }
        rem_b[sink - n] -= delta;
        remaining -= delta;
    }

    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            total += flow[static_cast<std::size_t>(i) * m + j] *
                     cost[static_cast<std::size_t>(i) * m + j];
    total = std::max(total, 0.0);
    return p == 1 ? total : std::pow(total, 1.0 / p);
}

namespace {

std::vector<Vec2> overlay_centroids(const Rect& domain, int grid) {
    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(grid) * grid);
    for (int j = 0; j < grid; ++j)
        for (int i = 0; i < grid; ++i)
            pts.push_back({domain.lo.x + domain.width() * (i + 0.5) / grid,
                           domain.lo.y + domain.height() * (j + 0.5) / grid});
    return pts;
}

std::uint64_t splitmix64_local(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Member velocities at the points, atoms[point][member*dim ...].
std::vector<std::vector<double>> ensemble_values_at(const Ensemble& ens,
                                                    const std::vector<Vec2>& points) {
    const PointLocator locator(*ens.mesh);
    std::vector<std::vector<double>> values(points.size());
    for (std::size_t q = 0; q < points.size(); ++q) {
        const auto loc = locator.locate(points[q]);
        values[q].reserve(2 * ens.members.size());
        for (const auto& member : ens.members) {
            const Vec2 v = eval_velocity(member.field, loc.element, loc.ref);
            values[q].push_back(v.x);
            values[q].push_back(v.y);
        }
    }
    return values;
}

WeightedAtoms atoms_from(const std::vector<double>& values, int dim) {
    WeightedAtoms atoms;
    atoms.dim = dim;
    atoms.coords = values;
    const int n = static_cast<int>(values.size()) / dim;
    atoms.weights.assign(n, 1.0 / n);
    return atoms;
}

} // namespace

WassersteinResult wasserstein_distances(const Ensemble& a, const Ensemble& b, const Rect& domain,
                                        const WassersteinConfig& cfg) {
    if (a.size() < 1 || b.size() < 1)
        throw std::invalid_argument("wasserstein_distances: empty ensemble");
    if (cfg.eval_grid < 1 || cfg.pair_budget < 1)
        throw std::invalid_argument("wasserstein_distances: empty point sets");

    const std::vector<Vec2> points = overlay_centroids(domain, cfg.eval_grid);
    const auto values_a = ensemble_values_at(a, points);
    const auto values_b = ensemble_values_at(b, points);
    const int n_pts = static_cast<int>(points.size());

    std::vector<double> w1_per_point(n_pts, 0.0);
    parallel_for_dynamic(n_pts, cfg.workers, [&](int q) {
        w1_per_point[q] =
            emd_atoms(atoms_from(values_a[q], 2), atoms_from(values_b[q], 2), cfg.order);
    });
    double w1 = 0.0;
    for (double v : w1_per_point) w1 += v;
    w1 *= domain.area() / n_pts;

    // Seeded subsample of point pairs for the 2-point distance.
    std::vector<std::pair<int, int>> pairs(cfg.pair_budget);
    std::uint64_t state = cfg.pair_seed;
    for (auto& pr : pairs) {
        state = splitmix64_local(state);
        pr.first = static_cast<int>(state % n_pts);
        state = splitmix64_local(state);
        pr.second = static_cast<int>(state % n_pts);
    }
    const int ma = a.size(), mb = b.size();
    std::vector<double> w2_per_pair(pairs.size(), 0.0);
    parallel_for_dynamic(static_cast<int>(pairs.size()), cfg.workers, [&](int k) {
        const auto [qx, qy] = pairs[k];
        WeightedAtoms atom_a, atom_b;
        atom_a.dim = atom_b.dim = 4;
        atom_a.weights.assign(ma, 1.0 / ma);
        atom_b.weights.assign(mb, 1.0 / mb);
        atom_a.coords.resize(4 * ma);
        atom_b.coords.resize(4 * mb);
        for (int i = 0; i < ma; ++i) {
            atom_a.coords[4 * i + 0] = values_a[qx][2 * i];
            atom_a.coords[4 * i + 1] = values_a[qx][2 * i + 1];
            atom_a.coords[4 * i + 2] = values_a[qy][2 * i];
            atom_a.coords[4 * i + 3] = values_a[qy][2 * i + 1];
        }
        for (int i = 0; i < mb; ++i) {
            atom_b.coords[4 * i + 0] = values_b[qx][2 * i];
            atom_b.coords[4 * i + 1] = values_b[qx][2 * i + 1];
            atom_b.coords[4 * i + 2] = values_b[qy][2 * i];
            atom_b.coords[4 * i + 3] = values_b[qy][2 * i + 1];
        }
        w2_per_pair[k] = emd_atoms(atom_a, atom_b, cfg.order);
    });
    double w2 = 0.0;
    for (double v : w2_per_pair) w2 += v;
    w2 *= domain.area() * domain.area() / static_cast<double>(pairs.size());

    return {w1, w2};
}

} // namespace statflow
