#include "pstrp/patching.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pstrp/error.hpp"

namespace pstrp {

std::string_view stream_name(Stream stream) {
  return stream == Stream::kSpatial ? "spatial" : "temporal";
}

int spatial_patch_side(int grid, int size) {
  if (grid < 1 || grid > size) {
    throw Error(ErrorCode::kConfig,
                fmt::format("spatial_grid {} invalid for a {}-pixel cube", grid, size));
  }
  return (size + grid - 1) / grid;
}

PatchSet slice_spatial(const SpatioTemporalCube& cube, int grid) {
  const int side = spatial_patch_side(grid, cube.size);
  PatchSet ps;
  ps.stream = Stream::kSpatial;
  ps.n = grid * grid;
  ps.length = cube.length();
  ps.channels = cube.channels;
  ps.side = side;
  ps.grid = grid;
  ps.data.resize(static_cast<std::size_t>(ps.n) * ps.patch_dim());
  const int last = cube.size - 1;
  std::size_t k = 0;
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      for (int l = 0; l < ps.length; ++l) {
        for (int c = 0; c < ps.channels; ++c) {
          for (int y = 0; y < side; ++y) {
            const int sy = std::min(gy * side + y, last);
            for (int x = 0; x < side; ++x) {
              const int sx = std::min(gx * side + x, last);
              ps.data[k++] = static_cast<double>(cube.at(l, c, sy, sx));
            }
          }
        }
      }
    }
  }
  return ps;
}

PatchSet slice_temporal(const SpatioTemporalCube& cube) {
  PatchSet ps;
  ps.stream = Stream::kTemporal;
  ps.n = cube.length();
  ps.length = 1;
  ps.channels = cube.channels;
  ps.side = cube.size;
  ps.grid = 1;
  ps.data.assign(cube.data.begin(), cube.data.end());
  return ps;
}

std::vector<float> assemble_spatial(const PatchSet& ps, int size) {
  std::vector<float> out(static_cast<std::size_t>(ps.length) * ps.channels * size * size);
  for (int k = 0; k < ps.n; ++k) {
    const int gy = k / ps.grid;
    const int gx = k % ps.grid;
    for (int l = 0; l < ps.length; ++l) {
      for (int c = 0; c < ps.channels; ++c) {
        for (int y = 0; y < ps.side; ++y) {
          const int oy = gy * ps.side + y;
          if (oy >= size) break;
          for (int x = 0; x < ps.side; ++x) {
            const int ox = gx * ps.side + x;
            if (ox >= size) break;
            out[((static_cast<std::size_t>(l) * ps.channels + c) * size + oy) * size + ox] =
                static_cast<float>(ps.at(k, l, c, y, x));
          }
        }
      }
    }
  }
  return out;
}

std::vector<float> assemble_temporal(const PatchSet& ps) {
  return std::vector<float>(ps.data.begin(), ps.data.end());
}

bool Permutation::is_bijection() const {
  std::vector<bool> seen(pi.size(), false);
  for (int p : pi) {
    if (p < 0 || p >= size() || seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(p)] = true;
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.pi.resize(pi.size());
  for (int slot = 0; slot < size(); ++slot) inv.pi[static_cast<std::size_t>(pi[slot])] = slot;
  return inv;
}

Permutation Permutation::identity(int n) {
  Permutation p;
  p.pi.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) p.pi[static_cast<std::size_t>(k)] = k;
  return p;
}

PatchSet apply_permutation(const PatchSet& ps, const Permutation& perm) {
  if (perm.size() != ps.n || !perm.is_bijection()) {
    throw Error(ErrorCode::kShape, "apply_permutation: permutation does not match patch count");
  }
  PatchSet out = ps;
  const std::size_t dim = ps.patch_dim();
  for (int slot = 0; slot < ps.n; ++slot) {
    const auto src = ps.patch(perm.pi[static_cast<std::size_t>(slot)]);
    std::copy(src.begin(), src.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(slot) * dim));
  }
  return out;
}

ShuffleResult shuffle(const PatchSet& ps, Rng& rng) {
  Permutation perm{rng.permutation(ps.n)};
  return {apply_permutation(ps, perm), std::move(perm)};
}

AlignedOrderMatrix align_matrix(const OrderPredictionMatrix& m, const Permutation& perm) {
  if (perm.size() != m.n || m.m.size() != static_cast<std::size_t>(m.n) * m.n) {
    throw Error(ErrorCode::kShape,
                fmt::format("align_matrix: {}x{} matrix with a permutation of {}", m.n, m.n,
                            perm.size()));
  }
  AlignedOrderMatrix out;
  out.matrix_.n = m.n;
  out.matrix_.m.resize(m.m.size());
  for (int slot = 0; slot < m.n; ++slot) {
    const auto dst = static_cast<std::size_t>(perm.pi[static_cast<std::size_t>(slot)]) * m.n;
    std::copy_n(m.m.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(slot) * m.n),
                m.n, out.matrix_.m.begin() + static_cast<std::ptrdiff_t>(dst));
  }
  return out;
}

OrderPredictionMatrix unalign_matrix(const AlignedOrderMatrix& aligned, const Permutation& perm) {
  const auto& a = aligned.matrix();
  if (perm.size() != a.n) throw Error(ErrorCode::kShape, "unalign_matrix: dimension mismatch");
  OrderPredictionMatrix out{a.n, std::vector<double>(a.m.size())};
  for (int slot = 0; slot < a.n; ++slot) {
    const auto src = static_cast<std::size_t>(perm.pi[static_cast<std::size_t>(slot)]) * a.n;
    std::copy_n(a.m.begin() + static_cast<std::ptrdiff_t>(src), a.n,
                out.m.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(slot) * a.n));
  }
  return out;
}

AlignedOrderMatrix aligned_from_canonical(OrderPredictionMatrix m) {
  AlignedOrderMatrix out;
  out.matrix_ = std::move(m);
  return out;
}

std::vector<double> align_pairwise(std::span<const double> in, const Permutation& perm) {
  const int n = perm.size();
  if (in.size() != static_cast<std::size_t>(n) * n) {
    throw Error(ErrorCode::kShape, "align_pairwise: dimension mismatch");
  }
  std::vector<double> out(in.size());
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      out[static_cast<std::size_t>(perm.pi[static_cast<std::size_t>(a)]) * n +
          perm.pi[static_cast<std::size_t>(b)]] = in[static_cast<std::size_t>(a) * n + b];
    }
  }
  return out;
}

OrderPredictionMatrix softmax_rows(std::span<const double> logits, int n) {
  OrderPredictionMatrix out{n, std::vector<double>(logits.size())};
  for (int r = 0; r < n; ++r) {
    const auto row = logits.subspan(static_cast<std::size_t>(r) * n, static_cast<std::size_t>(n));
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      const double e = std::exp(row[static_cast<std::size_t>(c)] - mx);
      out.m[static_cast<std::size_t>(r) * n + c] = e;
      sum += e;
    }
    for (int c = 0; c < n; ++c) out.m[static_cast<std::size_t>(r) * n + c] /= sum;
  }
  return out;
}

}  // namespace pstrp
