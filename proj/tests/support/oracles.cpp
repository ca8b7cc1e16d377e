// Copyright 2026 The cbfdecode Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cbf::testing {

double naive_kl(const std::vector<double>& q, const std::vector<double>& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    if (p[i] == 0.0) return std::numeric_limits<double>::infinity();
    s += q[i] * std::log(q[i] / p[i]);
  }
  return s;
}

std::vector<double> project_to_simplex(const std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

namespace {

// Objective restricted to the allowed coordinates; boundary points where
// some q is zero are fine (0 ln 0 = 0).
double objective(const std::vector<double>& q, const std::vector<double>& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) s += q[i] * std::log(q[i] / p[i]);
  }
  return s;
}

std::vector<double> gradient(const std::vector<double>& q, const std::vector<double>& p) {
  std::vector<double> g(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    g[i] = std::log(std::max(q[i], 1e-300) / p[i]) + 1.0;
  }
  return g;
}

}  // namespace

std::vector<double> kl_projection_pgd(const std::vector<double>& p, const std::vector<bool>& allowed,
                                      int max_iters, double tol) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (allowed[i]) idx.push_back(i);
  }
  const std::size_t m = idx.size();
  std::vector<double> pr(m);
  for (std::size_t j = 0; j < m; ++j) pr[j] = p[idx[j]];

  std::vector<double> q(m, 1.0 / static_cast<double>(m));
  std::vector<double> g = gradient(q, pr);
  double step = 0.1;
  double f = objective(q, pr);
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> cand(m), trial;
    double t = step;
    double f_new = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j < m; ++j) cand[j] = q[j] - t * g[j];
      trial = project_to_simplex(cand);
      f_new = objective(trial, pr);
      double decrease = 0.0;
      for (std::size_t j = 0; j < m; ++j) decrease += g[j] * (q[j] - trial[j]);
      if (f_new <= f - 1e-4 * decrease || decrease <= 0.0) break;
      t *= 0.5;
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < m; ++j) moved = std::max(moved, std::abs(trial[j] - q[j]));
    std::vector<double> g_new = gradient(trial, pr);
    // Barzilai-Borwein step for the next iteration.
    double ss = 0.0, sy = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double s = trial[j] - q[j];
      ss += s * s;
      sy += s * (g_new[j] - g[j]);
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e6) : 0.1;
    q = std::move(trial);
    g = std::move(g_new);
    f = f_new;
    if (moved < tol) break;
  }
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t j = 0; j < m; ++j) out[idx[j]] = q[j];
  return out;
}

namespace {

void grid_recurse(std::size_t dim, std::vector<double>& point, const std::vector<double>& lo,
                  double step, std::size_t points_per_dim, const std::function<void()>& visit) {
  if (dim == lo.size()) {
    visit();
    return;
  }
  for (std::size_t k = 0; k < points_per_dim; ++k) {
    point[dim] = lo[dim] + step * static_cast<double>(k);
    grid_recurse(dim + 1, point, lo, step, points_per_dim, visit);
  }
}

}  // namespace

std::vector<double> relaxed_kl_grid_search(const std::vector<double>& p,
                                           const std::vector<bool>& allowed, double delta) {
  const std::size_t n = p.size();
  const std::size_t d = n - 1;  // free coordinates; the last one closes the simplex
  std::vector<double> best;
  double best_f = std::numeric_limits<double>::infinity();

  auto consider = [&](const std::vector<double>& free) {
    std::vector<double> q(n);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (free[i] < 0.0) return;
      q[i] = free[i];
      s += free[i];
    }
    if (s > 1.0) return;
    q[d] = 1.0 - s;
    double dis = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!allowed[i]) dis += q[i];
    }
    if (dis > delta) return;
    const double f = naive_kl(q, p);
    if (f < best_f) {
      best_f = f;
      best = q;
    }
  };

  if (d == 0) {
    consider({});
    return best;
  }

  // Level 0: regular grid over the unit cube of free coordinates.
  double step = 0.02;
  std::vector<double> lo(d, 0.0), point(d);
  grid_recurse(0, point, lo, step, 51, [&] { consider(point); });

  // Zoom in around the incumbent.
  constexpr std::size_t kPoints = 21;
  for (int level = 0; level < 10 && !best.empty(); ++level) {
    const std::vector<double> center(best.begin(), best.begin() + static_cast<long>(d));
    const double radius = 2.0 * step;
    step = 2.0 * radius / static_cast<double>(kPoints - 1);
    for (std::size_t i = 0; i < d; ++i) lo[i] = center[i] - radius;
    grid_recurse(0, point, lo, step, kPoints, [&] { consider(point); });
  }
  return best;
}

std::map<std::vector<TokenId>, double> enumerate_blocks(const TokenPredictor& g, const Text& x,
                                                        std::size_t horizon) {
  std::map<std::vector<TokenId>, double> out;
  const std::size_t n = g.vocabulary()->size();
  std::function<void(const Text&, std::vector<TokenId>&, double)> rec =
      [&](const Text& cur, std::vector<TokenId>& block, double prob) {
        if (block.size() == horizon) {
          out[block] = prob;
          return;
        }
        const auto p = g.predict(cur);
        for (std::size_t i = 0; i < n; ++i) {
          const TokenId t = TokenId::from_index(i);
          block.push_back(t);
          rec(concat(cur, t), block, prob * p.probs()[i]);
          block.pop_back();
        }
      };
  std::vector<TokenId> block;
  rec(x, block, 1.0);
  return out;
}

double total_variation(const std::map<std::vector<TokenId>, double>& a,
                       const std::map<std::vector<TokenId>, double>& b) {
  double s = 0.0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    s += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) s += std::abs(v);
  }
  return 0.5 * s;
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n, double floor) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) {
    do {
      v = u(rng);
    } while (v <= 0.0);
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> random_simplex_point(std::mt19937_64& rng, const std::vector<bool>& support) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> q(support.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (support[i]) {
      q[i] = e(rng);
      s += q[i];
    }
  }
  for (auto& v : q) v /= s;
  return q;
}

}  // namespace cbf::testing
