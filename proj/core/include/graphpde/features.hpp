#pragma once

#include <vector>

#include "graphpde/graph.hpp"

namespace gpde {

// Structural features consumed by the graph transformer.
//
//  - phi[i*n+j]: length of the shortest directed path i -> j, capped at
//    kPathCap; kPathCap also stands for "unreachable". phi[i*n+i] = 0.
//  - mask[i*n+j]: 0 when some directed path connects i and j in either
//    direction (uncapped reachability, so the relation is symmetric),
//    -inf otherwise. Pad nodes get -inf rows and columns, diagonal included.
//  - in_deg/out_deg: edge-endpoint counts clamped to kDegCap.
struct GraphFeatures {
  int n = 0;
  std::vector<int> type_ids;            // n
  std::vector<int> in_deg, out_deg;     // n, values in [0, kDegCap]
  std::vector<int> phi;                 // n*n, values in [0, kPathCap]
  std::vector<float> mask;              // n*n, 0 or -inf

  static constexpr int kPathCap = 14;   // 15 table slots per direction
  static constexpr int kDegCap = 15;    // 16 table slots per direction

  int phi_at(int i, int j) const { return phi[size_t(i) * n + j]; }
  float mask_at(int i, int j) const { return mask[size_t(i) * n + j]; }
};

GraphFeatures compute_features(const CompGraph& g);

}  // namespace gpde
