#include "cat/action_tree.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>
#include <unordered_set>

namespace cat {

Mask Mask::one_hot(std::size_t size, std::size_t index) {
  Mask m(size);
  m.set(index);
  return m;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool Mask::implies(const Mask& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i] && !other.bits_[i]) return false;
  return true;
}

Mask& Mask::operator|=(const Mask& other) {
  if (other.size() != size()) throw ActionTreeError("mask size mismatch in union");
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

std::string Mask::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

// ---------------------------------------------------------------------------
// PathTree

PathTree::PathTree(std::vector<int> arities) : arities_(std::move(arities)), nodes_(1) {
  for (int a : arities_)
    if (a < 1) throw ActionTreeError(fmt::format("component arity must be >= 1, got {}", a));
}

void PathTree::check_path(std::span<const int> path) const {
  if (path.size() != arities_.size())
    throw ActionTreeError(fmt::format("path length {} does not match tree depth {}", path.size(), arities_.size()));
  for (std::size_t k = 0; k < path.size(); ++k)
    if (path[k] < 0 || path[k] >= arities_[k])
      throw ActionTreeError(
          fmt::format("value {} at depth {} is outside component arity {}", path[k], k, arities_[k]));
}

void PathTree::insert(std::span<const int> path) {
  check_path(path);
  NodeId node = 0;
  for (int v : path) {
    auto& edges = nodes_[node];
    auto it = std::lower_bound(edges.begin(), edges.end(), v, [](const Edge& e, int x) { return e.value < x; });
    if (it != edges.end() && it->value == v) {
      node = it->child;
      continue;
    }
    auto child = static_cast<NodeId>(nodes_.size());
    edges.insert(it, Edge{v, child});
    nodes_.emplace_back();
    node = child;
  }
}

std::optional<PathTree::NodeId> PathTree::find(std::span<const int> prefix) const {
  if (prefix.size() > arities_.size()) return std::nullopt;
  NodeId node = 0;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    const auto& edges = nodes_[node];
    auto it = std::lower_bound(edges.begin(), edges.end(), prefix[k],
                               [](const Edge& e, int x) { return e.value < x; });
    if (it == edges.end() || it->value != prefix[k]) return std::nullopt;
    node = it->child;
  }
  return node;
}

bool PathTree::contains(std::span<const int> path) const {
  return path.size() == arities_.size() && !empty() && find(path).has_value();
}

std::vector<Path> PathTree::leaves() const {
  std::vector<Path> out;
  if (empty()) return out;
  Path current;
  auto walk = [&](auto&& self, NodeId node) -> void {
    if (current.size() == arities_.size()) {
      out.push_back(current);
      return;
    }
    for (const auto& e : nodes_[node]) {
      current.push_back(e.value);
      self(self, e.child);
      current.pop_back();
    }
  };
  walk(walk, 0);
  return out;
}

std::size_t PathTree::leaf_count() const {
  if (empty()) return 0;
  std::size_t n = 0;
  for (const auto& edges : nodes_)
    if (edges.empty()) ++n;
  return n;
}

bool PathTree::same_paths(const PathTree& other) const {
  if (empty() || other.empty()) return empty() == other.empty();
  if (depth() != other.depth()) return false;
  return leaves() == other.leaves();
}

bool PathTree::operator==(const PathTree& other) const {
  return arities_ == other.arities_ && same_paths(other);
}

// ---------------------------------------------------------------------------
// ActionTree

ActionTree ActionTree::build(std::vector<ComponentSpec> spec, std::span<const Path> legal_paths) {
  if (spec.empty()) throw ActionTreeError("action tree needs at least one component");
  std::vector<int> arities;
  for (auto& c : spec) {
    if (c.arity < 1) throw ActionTreeError(fmt::format("component '{}' has arity {} (< 1)", c.name, c.arity));
    if (c.value_labels.empty()) {
      for (int v = 0; v < c.arity; ++v) c.value_labels.push_back(std::to_string(v));
    }
    if (static_cast<int>(c.value_labels.size()) != c.arity)
      throw ActionTreeError(fmt::format("component '{}' has {} labels for arity {}", c.name,
                                        c.value_labels.size(), c.arity));
    std::set<std::string_view> seen(c.value_labels.begin(), c.value_labels.end());
    if (seen.size() != c.value_labels.size())
      throw ActionTreeError(fmt::format("component '{}' has duplicate value labels", c.name));
    arities.push_back(c.arity);
  }
  if (legal_paths.empty()) throw ActionTreeError("action tree needs at least one legal path");
  PathTree paths(arities);
  for (const auto& p : legal_paths) paths.insert(p);
  return ActionTree(std::move(spec), std::move(paths));
}

std::vector<int> ActionTree::arities() const {
  std::vector<int> out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(c.arity);
  return out;
}

LogitCount count_logits(const ActionTree& tree) {
  LogitCount count;
  count.arities = tree.arities();
  count.total = std::accumulate(count.arities.begin(), count.arities.end(), 0);
  return count;
}

// ---------------------------------------------------------------------------
// Masks

Mask derive_mask(const ValidActionTree& valid, std::span<const int> prefix) {
  if (prefix.size() >= valid.depth())
    throw ActionTreeError(fmt::format("prefix of length {} has no mask in a tree of depth {}", prefix.size(),
                                      valid.depth()));
  if (valid.empty()) throw ActionTreeError("valid tree is empty; no masks exist");
  auto node = valid.find(prefix);
  if (!node) throw ActionTreeError(fmt::format("prefix [{}] is not in the valid tree", fmt::join(prefix, ",")));
  Mask mask(static_cast<std::size_t>(valid.arities()[prefix.size()]));
  for (const auto& e : valid.children(*node)) mask.set(static_cast<std::size_t>(e.value));
  return mask;
}

std::vector<Mask> collapse_masks(const ValidActionTree& valid) {
  if (valid.empty()) throw ActionTreeError("cannot collapse masks of an empty valid tree");
  std::vector<Mask> masks;
  for (int a : valid.arities()) masks.emplace_back(static_cast<std::size_t>(a));
  std::vector<PathTree::NodeId> frontier{valid.root()};
  for (std::size_t k = 0; k < valid.depth(); ++k) {
    std::vector<PathTree::NodeId> next;
    for (auto node : frontier) {
      for (const auto& e : valid.children(node)) {
        masks[k].set(static_cast<std::size_t>(e.value));
        next.push_back(e.child);
      }
    }
    frontier = std::move(next);
  }
  return masks;
}

// ---------------------------------------------------------------------------
// Depth-2 flattening

namespace {

void check_groups(const std::vector<std::vector<int>>& groups, std::size_t depth) {
  if (groups.empty() || groups.size() > 2)
    throw ActionTreeError(fmt::format("depth-2 flattening needs 1 or 2 groups, got {}", groups.size()));
  int expected = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw ActionTreeError("depth-2 group is empty");
    for (int c : g) {
      if (c != expected)
        throw ActionTreeError(fmt::format("depth-2 groups must cover components in order; expected {}, got {}",
                                          expected, c));
      ++expected;
    }
  }
  if (static_cast<std::size_t>(expected) != depth)
    throw ActionTreeError(fmt::format("depth-2 groups cover {} of {} components", expected, depth));
}

}  // namespace

std::int64_t Depth2Flattening::group_code(std::size_t group, std::span<const int> path) const {
  std::int64_t code = 0;
  for (int c : groups_[group]) code = code * source_arities_[static_cast<std::size_t>(c)] + path[static_cast<std::size_t>(c)];
  return code;
}

Depth2Flattening::Depth2Flattening(const ActionTree& tree, std::vector<std::vector<int>> groups)
    : groups_((check_groups(groups, tree.depth()), std::move(groups))),
      source_arities_(tree.arities()),
      codes_(groups_.size()),
      flat_([&] {
        auto leaves = tree.paths().leaves();
        for (std::size_t g = 0; g < groups_.size(); ++g) {
          std::vector<std::int64_t> codes;
          for (const auto& leaf : leaves) codes.push_back(group_code(g, leaf));
          std::sort(codes.begin(), codes.end());
          codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
          codes_[g] = std::move(codes);
        }
        std::vector<ComponentSpec> spec;
        for (std::size_t g = 0; g < groups_.size(); ++g) {
          ComponentSpec c;
          c.arity = static_cast<int>(codes_[g].size());
          std::vector<std::string> names;
          for (int k : groups_[g]) names.push_back(tree.components()[static_cast<std::size_t>(k)].name);
          c.name = fmt::format("{}", fmt::join(names, "*"));
          // Labels are the member labels joined, decoded from each code.
          for (auto code : codes_[g]) {
            std::vector<std::string> parts(groups_[g].size());
            for (std::size_t i = groups_[g].size(); i-- > 0;) {
              auto k = static_cast<std::size_t>(groups_[g][i]);
              auto v = static_cast<int>(code % source_arities_[k]);
              code /= source_arities_[k];
              parts[i] = tree.components()[k].value_labels[static_cast<std::size_t>(v)];
            }
            c.value_labels.push_back(fmt::format("{}", fmt::join(parts, ":")));
          }
          spec.push_back(std::move(c));
        }
        std::vector<Path> flat_paths;
        flat_paths.reserve(leaves.size());
        for (const auto& leaf : leaves) flat_paths.push_back(encode(leaf));
        return ActionTree::build(std::move(spec), flat_paths);
      }()) {}

Path Depth2Flattening::encode(std::span<const int> path) const {
  if (path.size() != source_arities_.size())
    throw ActionTreeError(fmt::format("path length {} does not match tree depth {}", path.size(),
                                      source_arities_.size()));
  Path flat;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto code = group_code(g, path);
    auto it = std::lower_bound(codes_[g].begin(), codes_[g].end(), code);
    if (it == codes_[g].end() || *it != code)
      throw ActionTreeError(fmt::format("path [{}] is not a legal path of the source tree", fmt::join(path, ",")));
    flat.push_back(static_cast<int>(it - codes_[g].begin()));
  }
  return flat;
}

Path Depth2Flattening::decode(std::span<const int> flat_path) const {
  if (flat_path.size() != groups_.size())
    throw ActionTreeError(fmt::format("flattened path length {} does not match {} groups", flat_path.size(),
                                      groups_.size()));
  Path path(source_arities_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto idx = flat_path[g];
    if (idx < 0 || static_cast<std::size_t>(idx) >= codes_[g].size())
      throw ActionTreeError(fmt::format("flattened value {} outside group arity {}", idx, codes_[g].size()));
    auto code = codes_[g][static_cast<std::size_t>(idx)];
    for (std::size_t i = groups_[g].size(); i-- > 0;) {
      auto k = static_cast<std::size_t>(groups_[g][i]);
      path[k] = static_cast<int>(code % source_arities_[k]);
      code /= source_arities_[k];
    }
  }
  return path;
}

ValidActionTree Depth2Flattening::flatten(const ValidActionTree& valid) const {
  ValidActionTree out(flat_.arities());
  for (const auto& leaf : valid.leaves()) out.insert(encode(leaf));
  return out;
}

Depth2Flattening flatten_to_depth2(const ActionTree& tree, std::vector<std::vector<int>> groups) {
  return Depth2Flattening(tree, std::move(groups));
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

void write_node(const ValidActionTree& valid, PathTree::NodeId node, std::string& out) {
  out.push_back('{');
  bool first = true;
  for (const auto& e : valid.children(node)) {
    if (!first) out.push_back(',');
    first = false;
    out.push_back('"');
    out += std::to_string(e.value);
    out += "\":";
    write_node(valid, e.child, out);
  }
  out.push_back('}');
}

// SAX consumer accepting only nested objects keyed by canonical decimal
// integers. Leaves are collected as paths.
class TreeSax {
 public:
  using json = nlohmann::json;

  std::vector<Path> leaves;

  bool null() { return reject("null"); }
  bool boolean(bool) { return reject("boolean"); }
  bool number_integer(json::number_integer_t) { return reject("number"); }
  bool number_unsigned(json::number_unsigned_t) { return reject("number"); }
  bool number_float(json::number_float_t, const json::string_t&) { return reject("number"); }
  bool string(json::string_t&) { return reject("string"); }
  bool binary(json::binary_t&) { return reject("binary"); }
  bool start_array(std::size_t) { return reject("array"); }
  bool end_array() { return false; }

  bool start_object(std::size_t) {
    if (pending_key_) {
      path_.push_back(*pending_key_);
      pending_key_.reset();
    } else if (!frames_.empty()) {
      return reject("object");
    }
    frames_.emplace_back();
    return true;
  }

  bool key(json::string_t& k) {
    int value = parse_key(k);
    if (!frames_.back().insert(value).second)
      throw TreeParseError(fmt::format("duplicate key \"{}\" at path [{}]", k, fmt::join(path_, ",")));
    pending_key_ = value;
    return true;
  }

  bool end_object() {
    if (frames_.back().empty() && !path_.empty()) leaves.push_back(path_);
    frames_.pop_back();
    if (!path_.empty()) path_.pop_back();
    return true;
  }

  bool parse_error(std::size_t position, const std::string& last_token, const nlohmann::detail::exception& ex) {
    throw TreeParseError(fmt::format("syntax error at byte {} near '{}': {}", position, last_token, ex.what()));
  }

 private:
  bool reject(std::string_view what) {
    throw TreeParseError(fmt::format("unexpected {} at path [{}]; only objects are allowed", what,
                                     fmt::join(path_, ",")));
  }

  int parse_key(const std::string& k) const {
    bool canonical = !k.empty() && (k.size() == 1 || k[0] != '0') &&
                     std::all_of(k.begin(), k.end(), [](char c) { return c >= '0' && c <= '9'; });
    int value = 0;
    if (canonical) {
      auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), value);
      canonical = ec == std::errc{} && ptr == k.data() + k.size();
    }
    if (!canonical)
      throw TreeParseError(fmt::format("key \"{}\" at path [{}] is not a decimal child index", k,
                                       fmt::join(path_, ",")));
    return value;
  }

  std::vector<std::unordered_set<int>> frames_;
  std::vector<int> path_;
  std::optional<int> pending_key_;
};

}  // namespace

std::string serialize_valid_tree(const ValidActionTree& valid) {
  std::string out;
  write_node(valid, valid.root(), out);
  return out;
}

ValidActionTree deserialize_valid_tree(std::string_view text, std::span<const int> arities) {
  TreeSax sax;
  nlohmann::json::sax_parse(text.begin(), text.end(), &sax);

  std::size_t depth = arities.size();
  if (!sax.leaves.empty()) {
    std::size_t leaf_depth = sax.leaves.front().size();
    for (const auto& leaf : sax.leaves)
      if (leaf.size() != leaf_depth)
        throw TreeParseError(fmt::format("leaf [{}] has depth {}, expected {}", fmt::join(leaf, ","), leaf.size(),
                                         leaf_depth));
    if (!arities.empty() && leaf_depth != arities.size())
      throw TreeParseError(fmt::format("tree depth {} does not match {} components", leaf_depth, arities.size()));
    depth = leaf_depth;
  }

  std::vector<int> resolved(arities.begin(), arities.end());
  if (resolved.empty()) {
    resolved.assign(depth, 1);
    for (const auto& leaf : sax.leaves)
      for (std::size_t k = 0; k < depth; ++k) resolved[k] = std::max(resolved[k], leaf[k] + 1);
  }
  ValidActionTree tree(std::move(resolved));
  try {
    for (const auto& leaf : sax.leaves) tree.insert(leaf);
  } catch (const ActionTreeError& e) {
    throw TreeParseError(e.what());
  }
  return tree;
}

}  // namespace cat
