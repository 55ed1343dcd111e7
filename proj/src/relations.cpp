#include "pstrp/relations.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "pstrp/error.hpp"
#include "pstrp/simd/kernels.hpp"

namespace pstrp {

std::string_view relation_kind_name(RelationKind kind) {
  return kind == RelationKind::kCanberraSpatial ? "canberra_spatial" : "cosine_temporal";
}

EdgeSide opposite(EdgeSide side) {
  switch (side) {
    case EdgeSide::kUp:
      return EdgeSide::kDown;
    case EdgeSide::kDown:
      return EdgeSide::kUp;
    case EdgeSide::kLeft:
      return EdgeSide::kRight;
    case EdgeSide::kRight:
      return EdgeSide::kLeft;
  }
  return side;
}

std::vector<double> edge_vector(const PatchSet& ps, int k, EdgeSide side, int channel) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(ps.length) * ps.side);
  const int last = ps.side - 1;
  for (int l = 0; l < ps.length; ++l) {
    for (int e = 0; e < ps.side; ++e) {
      switch (side) {
        case EdgeSide::kUp:
          out.push_back(ps.at(k, l, channel, 0, e));
          break;
        case EdgeSide::kDown:
          out.push_back(ps.at(k, l, channel, last, e));
          break;
        case EdgeSide::kLeft:
          out.push_back(ps.at(k, l, channel, e, 0));
          break;
        case EdgeSide::kRight:
          out.push_back(ps.at(k, l, channel, e, last));
          break;
      }
    }
  }
  return out;
}

RelationMatrix canberra_matrix(const PatchSet& ps) {
  if (ps.stream != Stream::kSpatial) {
    throw Error(ErrorCode::kShape, "canberra_matrix needs a spatial patch set");
  }
  constexpr std::array kSides{EdgeSide::kUp, EdgeSide::kDown, EdgeSide::kLeft, EdgeSide::kRight};
  // edges[k][side] = all channels of that edge concatenated.
  const std::size_t edge_len = static_cast<std::size_t>(ps.channels) * ps.length * ps.side;
  std::vector<std::array<std::vector<double>, 4>> edges(static_cast<std::size_t>(ps.n));
  for (int k = 0; k < ps.n; ++k) {
    for (std::size_t s = 0; s < kSides.size(); ++s) {
      auto& e = edges[static_cast<std::size_t>(k)][s];
      e.reserve(edge_len);
      for (int c = 0; c < ps.channels; ++c) {
        const auto part = edge_vector(ps, k, kSides[s], c);
        e.insert(e.end(), part.begin(), part.end());
      }
    }
  }
  const double terms = 4.0 * static_cast<double>(edge_len);
  RelationMatrix out{RelationKind::kCanberraSpatial, ps.n,
                     std::vector<double>(static_cast<std::size_t>(ps.n) * ps.n, 0.0)};
  for (int i = 0; i < ps.n; ++i) {
    for (int j = i + 1; j < ps.n; ++j) {
      double total = 0.0;
      for (std::size_t s = 0; s < kSides.size(); ++s) {
        const auto opp = static_cast<std::size_t>(opposite(kSides[s]));
        total += simd::canberra(edges[static_cast<std::size_t>(i)][s],
                                edges[static_cast<std::size_t>(j)][opp]);
      }
      const double d = std::clamp(total / terms, 0.0, 1.0);
      out.d[static_cast<std::size_t>(i) * ps.n + j] = d;
      out.d[static_cast<std::size_t>(j) * ps.n + i] = d;
    }
  }
  return out;
}

RelationMatrix cosine_matrix(const PatchSet& ps) {
  if (ps.stream != Stream::kTemporal) {
    throw Error(ErrorCode::kShape, "cosine_matrix needs a temporal patch set");
  }
  std::vector<double> norms(static_cast<std::size_t>(ps.n));
  for (int k = 0; k < ps.n; ++k) {
    norms[static_cast<std::size_t>(k)] = std::sqrt(simd::dot(ps.patch(k), ps.patch(k)));
  }
  RelationMatrix out{RelationKind::kCosineTemporal, ps.n,
                     std::vector<double>(static_cast<std::size_t>(ps.n) * ps.n, 0.0)};
  for (int i = 0; i < ps.n; ++i) {
    for (int j = i + 1; j < ps.n; ++j) {
      const double denom = norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)];
      const double sim =
          denom > 0.0 ? std::clamp(simd::dot(ps.patch(i), ps.patch(j)) / denom, -1.0, 1.0) : 0.0;
      const double d = (1.0 - sim) / 2.0;
      out.d[static_cast<std::size_t>(i) * ps.n + j] = d;
      out.d[static_cast<std::size_t>(j) * ps.n + i] = d;
    }
  }
  return out;
}

}  // namespace pstrp
