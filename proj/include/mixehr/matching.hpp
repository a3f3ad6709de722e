#pragma once

#include <span>
#include <vector>

#include "mixehr/matrix.hpp"

namespace mixehr {

// Minimum-cost assignment for a rows <= cols cost matrix (Hungarian method,
// O(n^2 m)). Returns the column assigned to each row.
std::vector<std::size_t> hungarian(const Matrix& cost);

// Pairs each true topic with a distinct learned topic maximising the summed
// per-category cosine of their word distributions. Element k is the learned
// topic matched to true topic k. All matrices are K x V_t.
std::vector<std::size_t> match_topics(const std::vector<Matrix>& learned,
                                      const std::vector<Matrix>& truth);

double total_variation(std::span<const double> p, std::span<const double> q);

double cosine(std::span<const double> a, std::span<const double> b);

// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace mixehr
