#pragma once

#include <string_view>
#include <vector>

#include "pstrp/patching.hpp"

namespace pstrp {

enum class RelationKind { kCanberraSpatial, kCosineTemporal };

std::string_view relation_kind_name(RelationKind kind);

/// Symmetric n x n distance matrix with zero diagonal and entries in [0, 1].
struct RelationMatrix {
  RelationKind kind = RelationKind::kCanberraSpatial;
  int n = 0;
  std::vector<double> d;

  double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
};

enum class EdgeSide { kUp, kDown, kLeft, kRight };

EdgeSide opposite(EdgeSide side);

/// One-pixel border strip of spatial patch k on `side` for one channel, taken
/// across all L frames (frame-major, then along the edge).
std::vector<double> edge_vector(const PatchSet& ps, int k, EdgeSide side, int channel);

/// d[i][j] = mean Canberra term between the edge of patch i on side h and the
/// edge of patch j on the opposite side, over the four sides, every channel and
/// every edge element (0/0 terms count as 0).
RelationMatrix canberra_matrix(const PatchSet& ps);

/// d[i][j] = (1 - cos(p_i, p_j)) / 2 on flattened frames; a zero-norm frame has
/// similarity 0 with anything.
RelationMatrix cosine_matrix(const PatchSet& ps);

}  // namespace pstrp
