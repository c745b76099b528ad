#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sobotrim/error.hpp"

namespace sobotrim {

constexpr int kMaxDim = 4;
using Index = std::array<int, kMaxDim>;
using Point = std::array<double, kMaxDim>;

// Regular node grid on the cube of the given inradius (half edge length),
// res samples per axis, node k at -inradius + k*h.
struct Grid {
  int m = 2;
  int res = 3;
  double inradius = 1.0;

  Grid() = default;
  Grid(int m_, int res_, double inradius_);

  double h() const { return 2.0 * inradius / (res - 1); }
  int64_t num_nodes() const;
  int64_t num_cells() const;
  double coord(int k) const { return -inradius + k * h(); }

  int64_t node_index(const Index& iv) const;
  Index node_at(int64_t flat) const;
  int64_t cell_index(const Index& iv) const;
  Index cell_at(int64_t flat) const;

  Point node_point(const Index& iv) const;
  bool operator==(const Grid& o) const {
    return m == o.m && res == o.res && inradius == o.inradius;
  }
};

// Sampled map from the grid cube into R^nu; node-major storage, component
// fastest.
struct GridMap {
  Grid grid;
  int ambient_dim = 1;
  std::vector<double> values;

  GridMap() = default;
  GridMap(const Grid& g, int nu, double fill = 0.0);

  std::span<double> at(int64_t node) {
    return {values.data() + node * ambient_dim, static_cast<size_t>(ambient_dim)};
  }
  std::span<const double> at(int64_t node) const {
    return {values.data() + node * ambient_dim, static_cast<size_t>(ambient_dim)};
  }
  std::span<double> at(const Index& iv) { return at(grid.node_index(iv)); }
  std::span<const double> at(const Index& iv) const { return at(grid.node_index(iv)); }
};

// Integration regions.  Membership is held per cell (used by all integrals);
// a node belongs to the region iff it is a corner of an active cell.
struct Region {
  Grid grid;
  std::vector<uint8_t> cells;
  std::string description;

  static Region full(const Grid& g, std::string desc = "full");
  static Region empty(const Grid& g, std::string desc = "empty");
  // predicate on the cell center
  static Region of_cells(const Grid& g, const std::function<bool(const Point&)>& pred,
                         std::string desc);
  // axis-aligned closed box [lo, hi]; cells whose center lies inside
  static Region box(const Grid& g, const Point& lo, const Point& hi, std::string desc);

  bool cell(int64_t c) const { return cells[static_cast<size_t>(c)] != 0; }
  int64_t active_cells() const;
  double volume() const;
  std::vector<uint8_t> node_mask() const;
  Region intersect(const Region& o) const;
  Region unite(const Region& o) const;
  Region complement() const;
  bool disjoint(const Region& o) const;
};

// Per-node m x nu Jacobians, entry (i, c) = d u_c / d x_i, row-major.
struct GradientField {
  Grid grid;
  int ambient_dim = 1;
  std::vector<double> entries;

  GradientField() = default;
  GradientField(const Grid& g, int nu);

  std::span<double> at(int64_t node) {
    const int64_t s = static_cast<int64_t>(grid.m) * ambient_dim;
    return {entries.data() + node * s, static_cast<size_t>(s)};
  }
  std::span<const double> at(int64_t node) const {
    const int64_t s = static_cast<int64_t>(grid.m) * ambient_dim;
    return {entries.data() + node * s, static_cast<size_t>(s)};
  }
  // Frobenius norm of the Jacobian at a node
  double frobenius(int64_t node) const;
};

// Central differences at interior nodes, one-sided second order at the
// boundary (requires res >= 3).
GradientField gradient(const GridMap& u);

// ( sum_{cells in region} h^m * mean_corners |Du|^p )^{1/p}
double sobolev_seminorm(const GridMap& u, double p, const Region& region);
double seminorm_of_field(const GradientField& g, double p, const Region& region);
// raw p-th power of the seminorm (the integral itself)
double energy_integral(const GradientField& g, double p, const Region& region);

// Trapezoidal cell-rule integral of a per-node scalar over a region.
double integrate_nodes(const Grid& g, const Region& region,
                       const std::function<double(int64_t)>& node_value);

// lhs = avg_x avg_y |u(x)-u(y)|^p over region^2 (cell-center subsample);
// rhs = diam(region)^p * avg_region |Du|^p.  Report only.
struct PoincareReport {
  double lhs = 0.0;
  double rhs = 0.0;
};
PoincareReport poincare_wirtinger_ratio(const GridMap& u, const Region& region, double p,
                                        int stride = 1);

// Even reflection across all faces; pad is the absolute widening per side
// (output inradius = inradius + 2*pad), and pad must be a whole number of
// cells.
GridMap reflect_extend(const GridMap& u, double pad);

// u(x - v) by multilinear interpolation; every requested sample must stay
// inside the domain.  With a region, only nodes of active cells are
// translated and the rest keep their original values.
GridMap translate(const GridMap& u, const Point& v, const Region* where = nullptr);

// Multilinear sample at an arbitrary point (clamped within eps of the
// boundary); throws DomainExceeded beyond that.
void sample(const GridMap& u, const Point& x, std::span<double> out);
void sample_gradient(const GradientField& g, const Point& x, std::span<double> out);

// L^p distance of two maps over a region (cell rule).
double lp_distance(const GridMap& a, const GridMap& b, double p, const Region& region);
double lp_norm(const GridMap& a, double p, const Region& region);
// L^p norm of the pointwise Jacobian difference.
double gradient_lp_distance(const GradientField& a, const GradientField& b, double p,
                            const Region& region);

// Binary format: one JSON header line {m,res,inradius,ambient_dim} followed
// by row-major float64 values.  CSV export only for m <= 2.
void save_gridmap(const GridMap& u, const std::string& path);
GridMap load_gridmap(const std::string& path);
void export_csv(const GridMap& u, const std::string& path);

// Builds a map by sampling f at the nodes.
GridMap map_from_function(const Grid& g, int nu,
                          const std::function<void(const Point&, std::span<double>)>& f);

}  // namespace sobotrim
