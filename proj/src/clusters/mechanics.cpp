#include "cat/clusters/mechanics.hpp"

#include <fmt/format.h>

namespace cat::clusters {

namespace {

constexpr Position kFacingStep[] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};  // Up, Right, Down, Left
constexpr Position kDirectionStep[] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};  // up, down, left, right

Position facing_step(Facing f) { return kFacingStep[static_cast<int>(f)]; }
Position right_of(Facing f) { return kFacingStep[(static_cast<int>(f) + 1) % 4]; }

enum class PushOutcome { Blocked, Move, Convert, Break };

PushOutcome push_outcome(const GridState& s, Position box, Position step) {
  const Position dest = box + step;
  if (!s.in_bounds(dest)) return PushOutcome::Blocked;
  const Cell& src = s.at(box);
  const Cell& dst = s.at(dest);
  if (dst.terrain == Terrain::Wall) return PushOutcome::Blocked;
  switch (dst.object) {
    case Object::Block: return dst.colour == src.colour ? PushOutcome::Convert : PushOutcome::Blocked;
    case Object::None: return dst.terrain == Terrain::Spikes ? PushOutcome::Break : PushOutcome::Move;
    default: return PushOutcome::Blocked;
  }
}

double apply_push(GridState& s, Position box, Position step, PushOutcome outcome) {
  Cell& src = s.at(box);
  switch (outcome) {
    case PushOutcome::Blocked: return 0.0;
    case PushOutcome::Move: {
      Cell& dst = s.at(box + step);
      dst.object = Object::Box;
      dst.colour = src.colour;
      src.object = Object::None;
      return 0.0;
    }
    case PushOutcome::Convert:
      src.object = Object::Block;
      if (++s.converted == s.initial_boxes) s.status = Status::Won;
      return 1.0;
    case PushOutcome::Break: {
      Cell& dst = s.at(box + step);
      dst.object = Object::BrokenBox;
      dst.colour = src.colour;
      src.object = Object::None;
      ++s.broken;
      s.status = Status::Lost;
      return -1.0;
    }
  }
  return 0.0;
}

bool is_box(const GridState& s, Position p) { return s.in_bounds(p) && s.at(p).object == Object::Box; }

bool open_cell(const GridState& s, Position p) {
  return s.in_bounds(p) && s.at(p).terrain != Terrain::Wall && s.at(p).object == Object::None;
}

// What a forward step of the avatar would do when it may push (variant M).
bool forward_effective(const GridState& s) {
  const Position ahead = s.agent->position + facing_step(s.agent->facing);
  if (open_cell(s, ahead)) return true;
  return is_box(s, ahead) && push_outcome(s, ahead, facing_step(s.agent->facing)) != PushOutcome::Blocked;
}

double move_agent(GridState& s, Position to) {
  s.at(s.agent->position).object = Object::None;
  s.at(to).object = Object::Agent;
  s.agent->position = to;
  if (s.at(to).terrain == Terrain::Spikes) {
    s.status = Status::Lost;
    return -1.0;
  }
  return 0.0;
}

double rotate(GridState& s, int delta) {
  s.agent->facing = static_cast<Facing>((static_cast<int>(s.agent->facing) + delta + 4) % 4);
  return 0.0;
}

double step_forward(GridState& s, bool can_push) {
  const Position step = facing_step(s.agent->facing);
  const Position ahead = s.agent->position + step;
  if (open_cell(s, ahead)) return move_agent(s, ahead);
  if (!can_push || !is_box(s, ahead)) return 0.0;
  auto outcome = push_outcome(s, ahead, step);
  double reward = apply_push(s, ahead, step, outcome);
  if (outcome == PushOutcome::Move || outcome == PushOutcome::Break) reward += move_agent(s, ahead);
  return reward;
}

// Push without advancing (MP, MPS). `colour` < 0 accepts any colour.
double push_ahead(GridState& s, int colour) {
  const Position step = facing_step(s.agent->facing);
  const Position ahead = s.agent->position + step;
  if (!is_box(s, ahead)) return 0.0;
  if (colour >= 0 && static_cast<int>(s.at(ahead).colour) != colour) return 0.0;
  return apply_push(s, ahead, step, push_outcome(s, ahead, step));
}

double move_box(GridState& s, Position box, int direction, int colour) {
  if (!is_box(s, box)) return 0.0;
  if (colour >= 0 && static_cast<int>(s.at(box).colour) != colour) return 0.0;
  const Position step = kDirectionStep[direction];
  return apply_push(s, box, step, push_outcome(s, box, step));
}

void check_running(const GridState& s) {
  if (s.status != Status::Running) throw LevelError("episode has terminated");
}

void check_agent(const GridState& s, Variant v) {
  if (uses_avatar(v) && !s.agent) throw LevelError(fmt::format("variant {} needs an agent", display_name(v)));
  if (!uses_avatar(v) && s.agent)
    throw LevelError(fmt::format("variant {} does not use an agent but the level has one", display_name(v)));
}

ComponentSpec component(std::string name, std::vector<std::string> labels) {
  ComponentSpec c;
  c.name = std::move(name);
  c.arity = static_cast<int>(labels.size());
  c.value_labels = std::move(labels);
  return c;
}

ComponentSpec coordinate(std::string name, int n) {
  ComponentSpec c;
  c.name = std::move(name);
  c.arity = n;
  return c;
}

void fill_cell_channels(const Cell& cell, float* out) {
  if (cell.terrain == Terrain::Wall) out[static_cast<int>(Channel::Wall)] = 1.0f;
  if (cell.terrain == Terrain::Spikes) out[static_cast<int>(Channel::Spikes)] = 1.0f;
  switch (cell.object) {
    case Object::Box: out[static_cast<int>(Channel::BoxRed) + static_cast<int>(cell.colour)] = 1.0f; break;
    case Object::Block: out[static_cast<int>(Channel::BlockRed) + static_cast<int>(cell.colour)] = 1.0f; break;
    case Object::Agent: out[static_cast<int>(Channel::Agent)] = 1.0f; break;
    case Object::BrokenBox: out[static_cast<int>(Channel::BrokenBox)] = 1.0f; break;
    case Object::None: break;
  }
}

}  // namespace

Variant parse_variant(std::string_view text) {
  if (text == "m" || text == "M") return Variant::M;
  if (text == "mp" || text == "MP") return Variant::MP;
  if (text == "mps" || text == "MPS") return Variant::MPS;
  if (text == "ma" || text == "Ma") return Variant::Ma;
  if (text == "msa" || text == "MSa") return Variant::MSa;
  throw LevelError(fmt::format("unknown variant '{}' (expected m, mp, mps, ma or msa)", text));
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::M: return "m";
    case Variant::MP: return "mp";
    case Variant::MPS: return "mps";
    case Variant::Ma: return "ma";
    case Variant::MSa: return "msa";
  }
  return "?";
}

std::string_view display_name(Variant v) {
  switch (v) {
    case Variant::M: return "M";
    case Variant::MP: return "MP";
    case Variant::MPS: return "MPS";
    case Variant::Ma: return "Ma";
    case Variant::MSa: return "MSa";
  }
  return "?";
}

bool uses_avatar(Variant v) { return v == Variant::M || v == Variant::MP || v == Variant::MPS; }

ActionTree make_action_tree(Variant v, int width, int height) {
  const std::vector<std::string> move_params{"rotate_left", "rotate_right", "forward"};
  std::vector<ComponentSpec> spec;
  std::vector<Path> paths;
  switch (v) {
    case Variant::M:
      spec.push_back(component("action", move_params));
      paths = {{kRotateLeft}, {kRotateRight}, {kForward}};
      break;
    case Variant::MP:
      spec.push_back(component("type", {"move", "push"}));
      spec.push_back(component("param", move_params));
      paths = {{kMove, kRotateLeft}, {kMove, kRotateRight}, {kMove, kForward}, {kPush, 0}};
      break;
    case Variant::MPS:
      spec.push_back(component("type", {"move", "push_red", "push_green", "push_blue"}));
      spec.push_back(component("param", move_params));
      paths = {{kMove, kRotateLeft}, {kMove, kRotateRight}, {kMove, kForward}};
      for (int c = 0; c < kNumColours; ++c) paths.push_back({kPush + c, 0});
      break;
    case Variant::Ma:
    case Variant::MSa:
      spec.push_back(coordinate("x", width));
      spec.push_back(coordinate("y", height));
      spec.push_back(component("direction", {"up", "down", "left", "right"}));
      if (v == Variant::MSa) spec.push_back(component("colour", {"red", "green", "blue"}));
      for (int x = 0; x < width; ++x)
        for (int y = 0; y < height; ++y)
          for (int d = 0; d < 4; ++d) {
            if (v == Variant::Ma) {
              paths.push_back({x, y, d});
            } else {
              for (int c = 0; c < kNumColours; ++c) paths.push_back({x, y, d, c});
            }
          }
      break;
  }
  return ActionTree::build(std::move(spec), paths);
}

std::vector<int> component_arities(Variant v, int width, int height) {
  switch (v) {
    case Variant::M: return {3};
    case Variant::MP: return {2, 3};
    case Variant::MPS: return {4, 3};
    case Variant::Ma: return {width, height, 4};
    case Variant::MSa: return {width, height, 4, kNumColours};
  }
  return {};
}

std::vector<std::vector<int>> depth2_groups(Variant v) {
  switch (v) {
    case Variant::M: return {{0}};
    case Variant::MP:
    case Variant::MPS: return {{0, 1}};
    case Variant::Ma: return {{0, 1}, {2}};
    case Variant::MSa: return {{0, 1}, {2, 3}};
  }
  return {};
}

ValidActionTree valid_action_tree(const GridState& s, Variant v) {
  check_running(s);
  check_agent(s, v);
  ValidActionTree tree(component_arities(v, s.width, s.height));

  switch (v) {
    case Variant::M:
      tree.insert(Path{kRotateLeft});
      tree.insert(Path{kRotateRight});
      if (forward_effective(s)) tree.insert(Path{kForward});
      break;
    case Variant::MP:
    case Variant::MPS: {
      tree.insert(Path{kMove, kRotateLeft});
      tree.insert(Path{kMove, kRotateRight});
      const Position step = facing_step(s.agent->facing);
      const Position ahead = s.agent->position + step;
      if (open_cell(s, ahead)) tree.insert(Path{kMove, kForward});
      if (is_box(s, ahead) && push_outcome(s, ahead, step) != PushOutcome::Blocked) {
        int type = v == Variant::MP ? kPush : kPush + static_cast<int>(s.at(ahead).colour);
        tree.insert(Path{type, 0});
      }
      break;
    }
    case Variant::Ma:
    case Variant::MSa:
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          if (!is_box(s, {x, y})) continue;
          for (int d = 0; d < 4; ++d) {
            if (push_outcome(s, {x, y}, kDirectionStep[d]) == PushOutcome::Blocked) continue;
            if (v == Variant::Ma)
              tree.insert(Path{x, y, d});
            else
              tree.insert(Path{x, y, d, static_cast<int>(s.at({x, y}).colour)});
          }
        }
      break;
  }
  return tree;
}

double apply_action(GridState& s, std::span<const int> a, Variant v) {
  check_running(s);
  check_agent(s, v);
  const std::size_t depth = component_arities(v, s.width, s.height).size();
  if (a.size() != depth)
    throw LevelError(fmt::format("variant {} expects {} components, got {}", display_name(v), depth, a.size()));

  switch (v) {
    case Variant::M:
      switch (a[0]) {
        case kRotateLeft: return rotate(s, -1);
        case kRotateRight: return rotate(s, +1);
        case kForward: return step_forward(s, true);
        default: return 0.0;
      }
    case Variant::MP:
    case Variant::MPS:
      if (a[0] == kMove) {
        switch (a[1]) {
          case kRotateLeft: return rotate(s, -1);
          case kRotateRight: return rotate(s, +1);
          case kForward: return step_forward(s, false);
          default: return 0.0;
        }
      }
      // Push carries only the nil parameter; anything else is not an action.
      if (a[1] != 0) return 0.0;
      if (v == Variant::MP) return a[0] == kPush ? push_ahead(s, -1) : 0.0;
      if (a[0] >= kPush && a[0] < kPush + kNumColours) return push_ahead(s, a[0] - kPush);
      return 0.0;
    case Variant::Ma:
    case Variant::MSa: {
      const Position box{a[0], a[1]};
      if (!s.in_bounds(box) || a[2] < 0 || a[2] >= 4) return 0.0;
      int colour = -1;
      if (v == Variant::MSa) {
        if (a[3] < 0 || a[3] >= kNumColours) return 0.0;
        colour = a[3];
      }
      return move_box(s, box, a[2], colour);
    }
  }
  return 0.0;
}

Observation observe_global(const GridState& s) {
  Observation obs{s.height, s.width, std::vector<float>(static_cast<std::size_t>(s.width * s.height * kNumChannels))};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      fill_cell_channels(s.at({x, y}), &obs.data[static_cast<std::size_t>((y * s.width + x) * kNumChannels)]);
  return obs;
}

Observation observe_ego(const GridState& s) {
  if (!s.agent) throw LevelError("ego observation needs an agent");
  Observation obs{kEgoSize, kEgoSize, std::vector<float>(kEgoSize * kEgoSize * kNumChannels)};
  const Position fwd = facing_step(s.agent->facing);
  const Position right = right_of(s.agent->facing);
  for (int row = 0; row < kEgoSize; ++row) {
    const int ahead = kEgoSize - 1 - row;
    for (int col = 0; col < kEgoSize; ++col) {
      const int lateral = col - kEgoSize / 2;
      const Position p{s.agent->position.x + ahead * fwd.x + lateral * right.x,
                       s.agent->position.y + ahead * fwd.y + lateral * right.y};
      if (!s.in_bounds(p)) continue;
      fill_cell_channels(s.at(p), &obs.data[static_cast<std::size_t>((row * kEgoSize + col) * kNumChannels)]);
    }
  }
  return obs;
}

Observation observe(const GridState& s, Variant v) { return uses_avatar(v) ? observe_ego(s) : observe_global(s); }

std::pair<int, int> observation_shape(Variant v, int width, int height) {
  return uses_avatar(v) ? std::pair{kEgoSize, kEgoSize} : std::pair{height, width};
}

}  // namespace cat::clusters
