#include "graphpde/features.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace gpde {

GraphFeatures compute_features(const CompGraph& g) {
  const int n = g.size();
  GraphFeatures f;
  f.n = n;
  f.type_ids.resize(n);
  f.in_deg.assign(n, 0);
  f.out_deg.assign(n, 0);
  f.phi.assign(size_t(n) * n, GraphFeatures::kPathCap);
  f.mask.assign(size_t(n) * n, -std::numeric_limits<float>::infinity());

  for (int i = 0; i < n; ++i) f.type_ids[i] = g.type_id(i);

  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : g.edges) {
    adj[a].push_back(b);
    ++f.out_deg[a];
    ++f.in_deg[b];
  }
  for (int i = 0; i < n; ++i) {
    f.in_deg[i] = std::min(f.in_deg[i], GraphFeatures::kDegCap);
    f.out_deg[i] = std::min(f.out_deg[i], GraphFeatures::kDegCap);
  }

  // One BFS per source gives uncapped distances; the cap is applied when
  // writing phi, while the mask uses raw reachability.
  std::vector<int> dist(n);
  std::queue<int> q;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    for (int j = 0; j < n; ++j) {
      if (dist[j] >= 0) {
        f.phi[size_t(s) * n + j] =
            std::min(dist[j], GraphFeatures::kPathCap);
        f.mask[size_t(s) * n + j] = 0.f;
        f.mask[size_t(j) * n + s] = 0.f;  // reachability counts both ways
      }
    }
  }

  // Pad nodes take no part in attention: -inf row and column.
  for (int i = 0; i < n; ++i) {
    if (g.nodes[i].kind != NodeKind::Pad) continue;
    for (int j = 0; j < n; ++j) {
      f.mask[size_t(i) * n + j] = -std::numeric_limits<float>::infinity();
      f.mask[size_t(j) * n + i] = -std::numeric_limits<float>::infinity();
    }
  }
  return f;
}

}  // namespace gpde
