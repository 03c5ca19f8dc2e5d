#pragma once

// Slow, obviously-correct reference implementations used only by the tests.
// None of them calls into the library code they are compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "fiberseg/random.hpp"
#include "fiberseg/volume.hpp"

namespace oracle {

using fiberseg::Coord;
using fiberseg::Dims;
using fiberseg::LabelVolume;
using fiberseg::MaskVolume;

inline constexpr uint32_t kOut = std::numeric_limits<uint32_t>::max();

/// Overwrites a volume's voxels in storage order.
template <typename T>
void assign(fiberseg::Volume<T>& v, std::type_identity_t<std::initializer_list<T>> values) {
  if (values.size() != v.size()) throw std::invalid_argument("assign: size mismatch");
  std::copy(values.begin(), values.end(), v.data().begin());
}

/// Fisher-Yates with the project generator, so test inputs are reproducible.
template <typename T>
void shuffle(std::vector<T>& v, fiberseg::Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

inline std::vector<Coord> neighbours(const Dims& d, const Coord& c, int connectivity) {
  std::vector<Coord> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int l1 = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (l1 == 0 || (connectivity == 6 && l1 != 1)) continue;
        const Coord n{c.z + dz, c.y + dy, c.x + dx};
        if (n.z < 0 || n.y < 0 || n.x < 0 || n.z >= d.depth || n.y >= d.height || n.x >= d.width) continue;
        out.push_back(n);
      }
    }
  }
  return out;
}

/// Flood-fill components, numbered by their first voxel in scan order.
inline LabelVolume bfs_components(const MaskVolume& m, int connectivity) {
  LabelVolume out(m.dims());
  uint32_t next = 1;
  for (size_t i = 0; i < m.size(); ++i) {
    if (!m[i] || out[i]) continue;
    std::deque<Coord> q{m.coord(i)};
    out[i] = next;
    while (!q.empty()) {
      const Coord c = q.front();
      q.pop_front();
      for (const Coord& n : neighbours(m.dims(), c, connectivity)) {
        const size_t j = m.index(n);
        if (m[j] && !out[j]) {
          out[j] = next;
          q.push_back(n);
        }
      }
    }
    ++next;
  }
  return out;
}

/// Geodesic (26-connected, unit step) distance from every voxel to a set of sources inside `domain`.
inline std::vector<int64_t> geodesic(const MaskVolume& domain, const std::vector<size_t>& sources) {
  std::vector<int64_t> dist(domain.size(), -1);
  std::deque<size_t> q;
  for (size_t s : sources) {
    dist[s] = 0;
    q.push_back(s);
  }
  while (!q.empty()) {
    const size_t i = q.front();
    q.pop_front();
    for (const Coord& n : neighbours(domain.dims(), domain.coord(i), 26)) {
      const size_t j = domain.index(n);
      if (domain[j] && dist[j] < 0) {
        dist[j] = dist[i] + 1;
        q.push_back(j);
      }
    }
  }
  return dist;
}

/// Reference outlier fill: each outlier takes the seed ID with the smallest geodesic
/// distance (ties: smaller ID), computed per seed ID by its own BFS.
inline LabelVolume brute_force_fill(const LabelVolume& labels, const MaskVolume& fg) {
  std::map<uint32_t, std::vector<size_t>> seeds;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != kOut) seeds[labels[i]].push_back(i);
  }
  // Outliers and seeds together form the growth domain.
  MaskVolume domain(labels.dims());
  for (size_t i = 0; i < labels.size(); ++i) domain[i] = (labels[i] != 0 && fg[i]) ? 1 : 0;
  std::map<uint32_t, std::vector<int64_t>> dist;
  for (const auto& [id, src] : seeds) dist[id] = geodesic(domain, src);
  LabelVolume out = labels;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kOut) continue;
    int64_t best = -1;
    uint32_t best_id = 0;
    for (const auto& [id, d] : dist) {
      if (d[i] >= 0 && (best < 0 || d[i] < best)) {
        best = d[i];
        best_id = id;
      }
    }
    out[i] = best_id;  // 0 marks "unreachable"
  }
  return out;
}

/// Pair-counting ARI straight from the definition (O(n^2)), in long double.
inline long double pair_count_ari(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
  const size_t n = a.size();
  long double both = 0, in_a = 0, in_b = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
    }
  }
  const long double pairs = static_cast<long double>(n) * (n - 1) / 2;
  const long double expected = in_a * in_b / pairs;
  const long double maxi = (in_a + in_b) / 2;
  if (maxi == expected) return 1.0L;
  return (both - expected) / (maxi - expected);
}

/// Naive DBSCAN: neighbourhoods by the full distance matrix, clusters grown from
/// core points in input order, border points to the earliest cluster reaching them.
inline std::vector<uint32_t> naive_dbscan(const std::vector<std::vector<double>>& pts, double eps, int min_pts) {
  const size_t n = pts.size();
  std::vector<std::vector<size_t>> nb(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < pts[i].size(); ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      if (d2 <= eps * eps) nb[i].push_back(j);
    }
  }
  std::vector<bool> core(n);
  for (size_t i = 0; i < n; ++i) core[i] = static_cast<int>(nb[i].size()) >= min_pts;
  std::vector<uint32_t> label(n, 0);
  uint32_t next = 1;
  for (size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i]) continue;
    // Grow the core component first, then attach borders.
    std::vector<size_t> stack{i};
    std::set<size_t> comp{i};
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      for (size_t q : nb[p]) {
        if (core[q] && !comp.count(q)) {
          comp.insert(q);
          stack.push_back(q);
        }
      }
    }
    for (size_t p : comp) label[p] = next;
    ++next;
  }
  std::vector<uint32_t> out(n, kOut);
  for (size_t i = 0; i < n; ++i) {
    if (core[i]) {
      out[i] = label[i];
      continue;
    }
    uint32_t best = 0;
    for (size_t q : nb[i]) {
      if (core[q] && (best == 0 || label[q] < best)) best = label[q];
    }
    if (best) out[i] = best;
  }
  return out;
}

/// Erosion straight from the definition.
inline MaskVolume naive_erode(const MaskVolume& m, int radius, bool ball26) {
  MaskVolume out(m.dims());
  const Dims& d = m.dims();
  for (size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const Coord c = m.coord(i);
    bool keep = true;
    for (int dz = -radius; dz <= radius && keep; ++dz) {
      for (int dy = -radius; dy <= radius && keep; ++dy) {
        for (int dx = -radius; dx <= radius && keep; ++dx) {
          const int l1 = std::abs(dz) + std::abs(dy) + std::abs(dx);
          if (!ball26 && l1 > radius) continue;
          const Coord n{c.z + dz, c.y + dy, c.x + dx};
          const bool inside = n.z >= 0 && n.y >= 0 && n.x >= 0 && n.z < d.depth && n.y < d.height && n.x < d.width;
          if (!inside || !m[m.index(n)]) keep = false;
        }
      }
    }
    out[i] = keep ? 1 : 0;
  }
  return out;
}

/// True iff a and b induce the same partition of the voxels where `where` is set.
template <typename A, typename B, typename W>
bool same_partition(const A& a, const B& b, const W& where) {
  std::map<uint64_t, uint64_t> ab, ba;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!where(i)) continue;
    const uint64_t x = a[i], y = b[i];
    if (auto it = ab.find(x); it != ab.end() && it->second != y) return false;
    if (auto it = ba.find(y); it != ba.end() && it->second != x) return false;
    ab[x] = y;
    ba[y] = x;
  }
  return true;
}

}  // namespace oracle
