#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cat {

/// Thrown for malformed trees, paths, groupings and masks.
class ActionTreeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by the valid-tree wire format parser.
class TreeParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One action component: a named discrete choice with `arity` values.
struct ComponentSpec {
  std::string name;
  int arity = 0;
  std::vector<std::string> value_labels;
};

using Path = std::vector<int>;

/// Binary availability vector over the values of one component.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t size, bool value = false) : bits_(size, value ? 1 : 0) {}

  static Mask all(std::size_t size) { return Mask(size, true); }
  static Mask one_hot(std::size_t size, std::size_t index);

  std::size_t size() const { return bits_.size(); }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) { bits_[i] = value ? 1 : 0; }
  std::size_t count() const;
  bool any() const { return count() > 0; }

  /// True when every bit set here is also set in `other`.
  bool implies(const Mask& other) const;

  Mask& operator|=(const Mask& other);
  bool operator==(const Mask& other) const = default;

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::string to_string() const;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Prefix tree over fixed-length integer paths. Node 0 is the root; children
/// are kept sorted by value. Used both for the full set of legal actions of an
/// ActionTree and for the per-state ValidActionTree.
class PathTree {
 public:
  using NodeId = std::uint32_t;
  struct Edge {
    int value;
    NodeId child;
    bool operator==(const Edge&) const = default;
  };

  PathTree() : PathTree(std::vector<int>{}) {}
  explicit PathTree(std::vector<int> arities);

  std::size_t depth() const { return arities_.size(); }
  std::span<const int> arities() const { return arities_; }
  bool empty() const { return nodes_.front().empty(); }

  /// Adds a full root-to-leaf path; duplicates are ignored.
  void insert(std::span<const int> path);

  bool contains(std::span<const int> path) const;
  std::optional<NodeId> find(std::span<const int> prefix) const;
  std::span<const Edge> children(NodeId node) const { return nodes_[node]; }
  NodeId root() const { return 0; }

  /// All leaves in lexicographic order.
  std::vector<Path> leaves() const;
  std::size_t leaf_count() const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Same set of paths, ignoring declared arities.
  bool same_paths(const PathTree& other) const;
  bool operator==(const PathTree& other) const;

 private:
  void check_path(std::span<const int> path) const;
  std::vector<int> arities_;
  std::vector<std::vector<Edge>> nodes_;
};

/// Per-state subtree of legal actions emitted by an environment.
using ValidActionTree = PathTree;

/// The static tree of action components; every leaf is a complete action.
class ActionTree {
 public:
  /// Rejects an empty spec, bad component specs, wrong path lengths and
  /// out-of-range values.
  static ActionTree build(std::vector<ComponentSpec> spec, std::span<const Path> legal_paths);

  std::span<const ComponentSpec> components() const { return components_; }
  std::size_t depth() const { return components_.size(); }
  std::vector<int> arities() const;
  const PathTree& paths() const { return paths_; }
  std::size_t leaf_count() const { return paths_.leaf_count(); }

  /// A fresh empty valid tree shaped like this tree.
  ValidActionTree empty_valid_tree() const { return PathTree(arities()); }

 private:
  ActionTree(std::vector<ComponentSpec> components, PathTree paths)
      : components_(std::move(components)), paths_(std::move(paths)) {}
  std::vector<ComponentSpec> components_;
  PathTree paths_;
};

struct LogitCount {
  std::vector<int> arities;
  int total = 0;
};

/// Policy-head accounting: one logit per value of every component.
LogitCount count_logits(const ActionTree& tree);

/// Mask over the children of the node reached by `prefix`.
Mask derive_mask(const ValidActionTree& valid, std::span<const int> prefix);

/// Breadth-wise union of all masks at each depth.
std::vector<Mask> collapse_masks(const ValidActionTree& valid);

/// Groups of consecutive components merged into single components by
/// row-major mixed-radix encoding. Each merged component enumerates only the
/// sub-tuples that occur on some legal path, in ascending mixed-radix order,
/// so forced "nil" parameters do not inflate the head width.
class Depth2Flattening {
 public:
  Depth2Flattening(const ActionTree& tree, std::vector<std::vector<int>> groups);

  const ActionTree& tree() const { return flat_; }
  std::span<const std::vector<int>> groups() const { return groups_; }

  Path encode(std::span<const int> path) const;
  Path decode(std::span<const int> flat_path) const;
  ValidActionTree flatten(const ValidActionTree& valid) const;

 private:
  std::vector<std::vector<int>> groups_;
  std::vector<int> source_arities_;
  // codes_[g] holds the mixed-radix codes of legal sub-tuples, sorted.
  std::vector<std::vector<std::int64_t>> codes_;
  ActionTree flat_;
  std::int64_t group_code(std::size_t group, std::span<const int> path) const;
};

Depth2Flattening flatten_to_depth2(const ActionTree& tree, std::vector<std::vector<int>> groups);

/// Compact JSON: nested objects keyed by decimal child index, leaves `{}`,
/// keys in ascending numeric order.
std::string serialize_valid_tree(const ValidActionTree& valid);

/// Parses the wire format. With `arities` empty they are inferred as one
/// past the largest index seen at each depth.
ValidActionTree deserialize_valid_tree(std::string_view text, std::span<const int> arities = {});

}  // namespace cat
