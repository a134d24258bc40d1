#pragma once

#include "cat/action_tree.hpp"
#include "cat/clusters/level.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace cat::clusters {

/// Action-space variants.
///   M   : c0 in {rotate_left, rotate_right, forward}; forward pushes boxes.
///   MP  : c0 in {move, push}; c1 is the move parameter, or nil (0) for push.
///   MPS : c0 in {move, push_red, push_green, push_blue}; c1 as in MP.
///   Ma  : no avatar; (x, y, direction) moves the box at (x, y).
///   MSa : as Ma with a trailing colour component that must match the box.
enum class Variant { M, MP, MPS, Ma, MSa };

inline constexpr std::array<Variant, 5> kAllVariants = {Variant::M, Variant::MP, Variant::MPS, Variant::Ma,
                                                        Variant::MSa};

Variant parse_variant(std::string_view text);
std::string_view to_string(Variant v);
std::string_view display_name(Variant v);

/// Avatar variants observe an ego-centric window; the others see the grid.
bool uses_avatar(Variant v);

// Component values.
inline constexpr int kRotateLeft = 0;
inline constexpr int kRotateRight = 1;
inline constexpr int kForward = 2;
inline constexpr int kMove = 0;
inline constexpr int kPush = 1;  // MP; MPS uses kPush + colour
inline constexpr int kDirUp = 0;
inline constexpr int kDirDown = 1;
inline constexpr int kDirLeft = 2;
inline constexpr int kDirRight = 3;

/// Full action tree of a variant for a width x height level.
ActionTree make_action_tree(Variant v, int width, int height);

/// Per-component arities of a variant, without building the tree.
std::vector<int> component_arities(Variant v, int width, int height);

/// Component grouping used by the depth-2 baseline.
std::vector<std::vector<int>> depth2_groups(Variant v);

/// Legal actions in `state`. Throws if the episode has ended.
ValidActionTree valid_action_tree(const GridState& state, Variant v);

/// Applies one action. Actions that are mechanically impossible leave the
/// state unchanged and return reward 0. Updates status but not step_count.
double apply_action(GridState& state, std::span<const int> action, Variant v);

inline constexpr int kEgoSize = 5;

/// Binary observation, channel-last: data[(row * cols + col) * kNumChannels + channel].
struct Observation {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float at(int row, int col, Channel c) const {
    return data[static_cast<std::size_t>((row * cols + col) * kNumChannels + static_cast<int>(c))];
  }
  std::size_t size() const { return data.size(); }
};

/// Ego view: 5x5 window in the agent frame, agent at the centre of the
/// bottom row facing up; out-of-bounds cells are all zero.
Observation observe_ego(const GridState& state);
/// Global view: height rows by width columns.
Observation observe_global(const GridState& state);
Observation observe(const GridState& state, Variant v);

/// Observation shape (rows, cols) a variant produces on a level.
std::pair<int, int> observation_shape(Variant v, int width, int height);

}  // namespace cat::clusters
