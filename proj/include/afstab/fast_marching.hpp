#pragma once

// Fast marching for sum_a g^{aa} (d_a T)^2 = 1 on a cube around a source
// point, diagonal metrics only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "afstab/grid.hpp"

namespace afstab {

struct FastMarchingOptions {
  int n = 81;                 // nodes per axis
  bool second_order = true;
  double init_radius = 5.0;   // in cells; exact chord lengths inside
};

/// Distance field on `grid` shifted to `origin`.
struct DistanceField {
  Grid grid;
  Vec3 origin = Vec3::Zero();
  std::vector<double> t;
  std::vector<Vec3> g_diag;

  Vec3 node(int i, int j, int k) const { return origin + grid.node(i, j, k); }
};

namespace detail {

// Solves sum_a alpha_a (T - t_a)^2 = 1 adding axes in order of increasing t_a.
inline double eikonal_update(std::array<std::pair<double, double>, 3> terms, int count) {
  std::sort(terms.begin(), terms.begin() + count,
            [](const auto& a, const auto& b) { return a.second < b.second; });
  double T = std::numeric_limits<double>::infinity();
  double q2 = 0, q1 = 0, q0 = -1;
  for (int m = 0; m < count; ++m) {
    const auto [alpha, tm] = terms[m];
    if (tm >= T) break;
    q2 += alpha;
    q1 -= 2 * alpha * tm;
    q0 += alpha * tm * tm;
    const double disc = q1 * q1 - 4 * q2 * q0;
    if (disc < 0) break;
    T = (-q1 + std::sqrt(disc)) / (2 * q2);
  }
  return T;
}

}  // namespace detail

inline DistanceField fast_marching(const MetricChart& chart, const Vec3& source, double half_width,
                                   const FastMarchingOptions& opt = {}) {
  DistanceField d;
  d.grid = Grid(opt.n, half_width);
  d.origin = source;
  const Grid& g = d.grid;
  const double h = g.h();
  const size_t n = g.size();
  d.t.assign(n, std::numeric_limits<double>::infinity());
  d.g_diag.resize(n);
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    const Mat3 m = metric_at(chart, d.node(i, j, k)).g;
    d.g_diag[idx] = m.diagonal();
  });

  enum : unsigned char { Far, Trial, Known };
  std::vector<unsigned char> state(n, Far);
  using Item = std::pair<double, size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;

  // exact chord lengths with the midpoint metric near the source
  const double r0 = opt.init_radius * h;
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    const Vec3 v = g.node(i, j, k);
    if (v.norm() > r0) return;
    const Mat3 gm = metric_at(chart, source + 0.5 * v).g;
    d.t[idx] = std::sqrt(v.dot(gm * v));
    state[idx] = Known;
  });
  const int N = g.n();
  auto update = [&](int i, int j, int k) {
    const size_t idx = g.index(i, j, k);
    std::array<std::pair<double, double>, 3> terms;
    int count = 0;
    const std::array<int, 3> c{i, j, k};
    for (int a = 0; a < 3; ++a) {
      double best = std::numeric_limits<double>::infinity(), best2 = best;
      for (int s : {-1, 1}) {
        std::array<int, 3> p = c;
        p[a] += s;
        if (p[a] < 0 || p[a] >= N) continue;
        const size_t pi = g.index(p[0], p[1], p[2]);
        if (state[pi] != Known || d.t[pi] >= best) continue;
        best = d.t[pi];
        best2 = std::numeric_limits<double>::infinity();
        p[a] += s;
        if (opt.second_order && p[a] >= 0 && p[a] < N) {
          const size_t pj = g.index(p[0], p[1], p[2]);
          if (state[pj] == Known && d.t[pj] <= best) best2 = d.t[pj];
        }
      }
      if (!std::isfinite(best)) continue;
      const double ginv = 1.0 / d.g_diag[idx][a];
      if (std::isfinite(best2))
        terms[count++] = {ginv * 9.0 / (4.0 * h * h), (4.0 * best - best2) / 3.0};
      else
        terms[count++] = {ginv / (h * h), best};
    }
    if (count == 0) return;
    const double T = detail::eikonal_update(terms, count);
    if (T < d.t[idx]) {
      d.t[idx] = T;
      state[idx] = Trial;
      heap.push({T, idx});
    }
  };
  auto visit_neighbors = [&](int i, int j, int k) {
    const std::array<int, 3> c{i, j, k};
    for (int a = 0; a < 3; ++a)
      for (int s : {-1, 1}) {
        std::array<int, 3> p = c;
        p[a] += s;
        if (p[a] < 0 || p[a] >= N) continue;
        if (state[g.index(p[0], p[1], p[2])] != Known) update(p[0], p[1], p[2]);
      }
  };

  g.for_each_node([&](int i, int j, int k, size_t idx) {
    if (state[idx] == Known) visit_neighbors(i, j, k);
  });
  while (!heap.empty()) {
    const auto [T, idx] = heap.top();
    heap.pop();
    if (state[idx] == Known || T > d.t[idx]) continue;
    state[idx] = Known;
    const int i = static_cast<int>(idx % N), j = static_cast<int>((idx / N) % N),
              k = static_cast<int>(idx / (static_cast<size_t>(N) * N));
    visit_neighbors(i, j, k);
  }
  return d;
}

/// g-volume of {T < r} with linear fractional occupancy of each node cell.
inline double ball_volume(const DistanceField& d, double r) {
  const Grid& g = d.grid;
  const int N = g.n();
  const double h = g.h(), h3 = h * h * h;
  std::vector<double> cell(g.size(), 0.0);
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    const double T = d.t[idx];
    // one-sided slopes clamp at the box faces
    double spread = 0.0;
    const std::array<int, 3> c{i, j, k};
    for (int a = 0; a < 3; ++a) {
      std::array<int, 3> lo = c, hi = c;
      lo[a] = std::max(0, c[a] - 1);
      hi[a] = std::min(N - 1, c[a] + 1);
      const double dt = d.t[g.index(hi[0], hi[1], hi[2])] - d.t[g.index(lo[0], lo[1], lo[2])];
      spread += std::abs(dt) / std::max(1, hi[a] - lo[a]);
    }
    double frac;
    if (spread <= 0.0)
      frac = T < r ? 1.0 : 0.0;
    else
      frac = std::clamp(0.5 + (r - T) / spread, 0.0, 1.0);
    cell[idx] = frac * std::sqrt(d.g_diag[idx].prod()) * h3;
  });
  return pairwise_sum(cell);
}

}  // namespace afstab
