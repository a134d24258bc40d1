#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cat::testing {

clusters::GridState random_level(Rng& rng, int max_w, int max_h, bool with_agent) {
  const int w = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_w - 1)));
  const int h = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_h - 1)));
  static constexpr char kGlyphs[] = {'.', '.', '.', '.', 'W', 's', 'r', 'g', 'b', 'R', 'G', 'B'};
  std::vector<std::string> rows(static_cast<std::size_t>(h), std::string(static_cast<std::size_t>(w), '.'));
  for (auto& row : rows)
    for (auto& c : row) c = kGlyphs[rng.below(sizeof kGlyphs)];
  if (with_agent) rows[rng.below(rows.size())][rng.below(static_cast<std::uint64_t>(w))] = 'A';
  std::string text;
  for (const auto& row : rows) text += row + "\n";
  auto state = clusters::load_level(text);
  if (state.agent) state.agent->facing = static_cast<clusters::Facing>(rng.below(4));
  return state;
}

namespace {
void grow(Rng& rng, std::span<const int> arities, std::size_t depth, Path& prefix, ValidActionTree& tree,
          double keep) {
  if (depth == arities.size()) {
    tree.insert(prefix);
    return;
  }
  std::vector<int> chosen;
  for (int v = 0; v < arities[depth]; ++v)
    if (rng.uniform() < keep) chosen.push_back(v);
  if (chosen.empty()) chosen.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(arities[depth]))));
  for (int v : chosen) {
    prefix.push_back(v);
    grow(rng, arities, depth + 1, prefix, tree, keep);
    prefix.pop_back();
  }
}
}  // namespace

ValidActionTree random_valid_tree(Rng& rng, std::span<const int> arities, double keep) {
  ValidActionTree tree(std::vector<int>(arities.begin(), arities.end()));
  Path prefix;
  grow(rng, arities, 0, prefix, tree, keep);
  return tree;
}

std::vector<double> vtrace_double_sum(std::span<const double> values, std::span<const double> rewards,
                                      std::span<const std::uint8_t> terminals, std::span<const double> rho,
                                      std::span<const double> u, double gamma) {
  const std::size_t n = rewards.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (std::size_t i = t; i < n; ++i) {
      double coeff = 1.0;
      bool cut = false;
      for (std::size_t j = t; j < i; ++j) {
        if (terminals[j]) {
          cut = true;
          break;
        }
        coeff *= gamma * u[j];
      }
      if (cut) break;
      const double g = terminals[i] ? 0.0 : gamma;
      sum += coeff * rho[i] * (rewards[i] + g * values[i + 1] - values[i]);
    }
    out[t] = values[t] + sum;
  }
  return out;
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({1e-3, std::abs(a[i]), std::abs(b[i])}));
  return worst;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string golden_path(const std::string& name) { return std::string(CAT_GOLDEN_DIR) + "/" + name; }
std::string level_path(const std::string& name) { return std::string(CAT_LEVELS_DIR) + "/" + name; }

}  // namespace cat::testing
