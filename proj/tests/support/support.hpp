#pragma once

#include "cat/action_tree.hpp"
#include "cat/clusters/level.hpp"
#include "cat/random.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cat::testing {

/// Random level between 2x2 and max_w x max_h with walls, spikes, boxes,
/// blocks and optionally one avatar facing a random direction.
clusters::GridState random_level(Rng& rng, int max_w, int max_h, bool with_agent);

/// Random non-empty subtree of the product tree over `arities`.
ValidActionTree random_valid_tree(Rng& rng, std::span<const int> arities, double keep = 0.5);

/// Direct double-sum evaluation of the V-trace target:
///   v_t = V_t + sum_{i>=t} (prod_{j<i} g_j u_j) rho_i (r_i + g_i V_{i+1} - V_i)
/// with g_j = 0 after a terminal step.
std::vector<double> vtrace_double_sum(std::span<const double> values, std::span<const double> rewards,
                                      std::span<const std::uint8_t> terminals, std::span<const double> rho,
                                      std::span<const double> u, double gamma);

/// Central differences of f at x, one coordinate at a time.
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double eps = 1e-4);

/// max_i |a_i - b_i| / max(1e-3, |a_i|, |b_i|)
double max_relative_error(std::span<const double> a, std::span<const double> b);

std::string read_file(const std::string& path);

/// Source-tree paths baked in at configure time.
std::string golden_path(const std::string& name);
std::string level_path(const std::string& name);

}  // namespace cat::testing
