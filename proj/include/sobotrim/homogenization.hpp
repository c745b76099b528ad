#pragma once

#include <functional>
#include <map>
#include <vector>

#include "sobotrim/cubication.hpp"
#include "sobotrim/grid.hpp"

namespace sobotrim {

struct FaceKey {
  int dim = 0;
  int64_t index = 0;
  auto operator<=>(const FaceKey&) const = default;
};

// Map defined on a collection of cubication faces; each face carries an
// i-dimensional grid of inradius eta whose axes are the spanned axes of the
// face in increasing order.  Shared subfaces must agree in the sense of
// traces.
struct SkeletonMap {
  const Cubication* cub = nullptr;
  int ambient_dim = 1;
  std::map<FaceKey, GridMap> faces;

  bool has(int dim, int64_t index) const { return faces.count({dim, index}) > 0; }
};

// restriction of a host-grid map to one face (exact node copies)
GridMap restrict_to_face(const GridMap& u, const Cubication& cub, int dim, int64_t index);
SkeletonMap restrict_to_skeleton(const GridMap& u, const Cubication& cub, int dim,
                                 const std::vector<int64_t>& face_ids);

// maximum disagreement across shared subfaces of the stored faces
double trace_mismatch(const SkeletonMap& sm);

// sum over faces of the face-intrinsic seminorm^p, then the p-th root;
// throws TraceIncompatible when shared traces disagree beyond tol
double skeleton_seminorm(const SkeletonMap& sm, double p, double trace_tol = 1e-8);

// Zero-degree homogenization of boundary data into the i-cube: the sampler
// receives a point of the boundary of the centered cube of inradius eta and
// writes the nu boundary components.  Requires p < i.  The singular center
// takes the value of the +x1 axis ray.
GridMap homogenize_cube(
    const std::function<void(const Point&, std::span<double>)>& boundary, int i,
    double eta, int res, int nu, double p);

// homogenization of one cubication face from the stored boundary subfaces
GridMap homogenize_face(const SkeletonMap& sm, int dim, int64_t face, double p);

struct ExtendResult {
  SkeletonMap filled;
  double max_input_jump = 0.0;   // continuity modulus of the pinned data
  // per dimension i in [ell+1, m]: energy of the filled faces and the
  // estimate terms eta^{m-i} ||Du||^p over the pinned faces of dim i
  std::vector<double> dim_energy_p;
  std::vector<double> dim_estimate_p;
};

// Iterated extension: pinned faces keep their values, every unfilled face of
// the bad subskeleton is homogenized from its boundary, dimension by
// dimension from ell+1 up to m.  Requires p < ell + 1.
ExtendResult extend_skeleton(const SkeletonMap& pinned, const Cubication& cub,
                             const GoodBadPartition& part, int ell, double p);

// write the m-dimensional faces of a skeleton map back onto the host grid
void rasterize_top_faces(const SkeletonMap& sm, GridMap& target);

// file bundle: one binary grid per face plus a JSON manifest
void export_skeleton_map(const SkeletonMap& sm, const std::string& dir);

}  // namespace sobotrim
