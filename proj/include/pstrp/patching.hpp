#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pstrp/random.hpp"
#include "pstrp/roi.hpp"

namespace pstrp {

enum class Stream { kSpatial, kTemporal };

std::string_view stream_name(Stream stream);

/// Ordered patch sequence cut from one cube, stored flat as n x patch_dim.
///
/// Spatial patch k (grid row k / grid, column k % grid) is L x C x side x side;
/// temporal patch k is frame k, 1 x C x size x size.
struct PatchSet {
  Stream stream = Stream::kSpatial;
  int n = 0;
  int length = 0;    // frames per patch (L for spatial, 1 for temporal)
  int channels = 0;
  int side = 0;      // patch edge in pixels
  int grid = 1;      // n_s for spatial, 1 for temporal
  std::vector<double> data;

  std::size_t patch_dim() const {
    return static_cast<std::size_t>(length) * channels * side * side;
  }
  std::span<const double> patch(int k) const {
    return std::span<const double>(data).subspan(static_cast<std::size_t>(k) * patch_dim(),
                                                 patch_dim());
  }
  double at(int k, int l, int c, int y, int x) const {
    return data[static_cast<std::size_t>(k) * patch_dim() +
                ((static_cast<std::size_t>(l) * channels + c) * side + y) * side + x];
  }
};

/// Patch edge for an n_s x n_s grid over a `size`-pixel cube: ceil(size / n_s).
/// When n_s does not divide the cube, the bottom/right border is replicated to
/// fill the last row/column of patches.
int spatial_patch_side(int grid, int size = kCubeSize);

PatchSet slice_spatial(const SpatioTemporalCube& cube, int grid);
PatchSet slice_temporal(const SpatioTemporalCube& cube);

/// Inverse of the slicers: reassembles the L x C x size x size cube data
/// (dropping any replicated border).
std::vector<float> assemble_spatial(const PatchSet& ps, int size = kCubeSize);
std::vector<float> assemble_temporal(const PatchSet& ps);

/// pi[slot] = true position of the patch placed in that slot.
struct Permutation {
  std::vector<int> pi;

  int size() const { return static_cast<int>(pi.size()); }
  bool is_bijection() const;
  Permutation inverse() const;
  static Permutation identity(int n);
};

/// shuffled.patch(slot) == ps.patch(perm.pi[slot]).
PatchSet apply_permutation(const PatchSet& ps, const Permutation& perm);

struct ShuffleResult {
  PatchSet shuffled;
  Permutation perm;
};

/// Draws perm uniformly over all n! orders.
ShuffleResult shuffle(const PatchSet& ps, Rng& rng);

/// n x n row-stochastic matrix; row = slot, column = position label.
struct OrderPredictionMatrix {
  int n = 0;
  std::vector<double> m;

  double at(int row, int col) const {
    return m[static_cast<std::size_t>(row) * n + col];
  }
};

/// Order matrix whose rows have been moved to canonical (true-position) order,
/// so the diagonal carries the probability of each patch's true label.
class AlignedOrderMatrix {
 public:
  const OrderPredictionMatrix& matrix() const { return matrix_; }
  int n() const { return matrix_.n; }
  double diag(int k) const { return matrix_.at(k, k); }

 private:
  friend AlignedOrderMatrix align_matrix(const OrderPredictionMatrix&, const Permutation&);
  friend AlignedOrderMatrix aligned_from_canonical(OrderPredictionMatrix);
  OrderPredictionMatrix matrix_;
};

/// Output row perm.pi[slot] = input row slot.
AlignedOrderMatrix align_matrix(const OrderPredictionMatrix& m, const Permutation& perm);

/// Inverse of align_matrix: output row slot = aligned row perm.pi[slot].
OrderPredictionMatrix unalign_matrix(const AlignedOrderMatrix& aligned, const Permutation& perm);

/// Wraps a matrix already known to be in canonical order (tests, unshuffled
/// inference).
AlignedOrderMatrix aligned_from_canonical(OrderPredictionMatrix m);

/// Pairwise (n x n) matrix in slot order mapped to canonical order:
/// out[pi[a]][pi[b]] = in[a][b].
std::vector<double> align_pairwise(std::span<const double> in, const Permutation& perm);

/// Row-wise softmax of an n x n logit matrix.
OrderPredictionMatrix softmax_rows(std::span<const double> logits, int n);

}  // namespace pstrp
