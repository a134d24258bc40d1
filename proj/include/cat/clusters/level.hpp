#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cat::clusters {

class LevelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Colour : std::uint8_t { Red = 0, Green = 1, Blue = 2 };
inline constexpr int kNumColours = 3;

enum class Terrain : std::uint8_t { Floor, Wall, Spikes };
enum class Object : std::uint8_t { None, Box, Block, BrokenBox, Agent };

/// Observation channels, in tensor order.
enum class Channel : int {
  BoxRed = 0,
  BoxGreen,
  BoxBlue,
  BlockRed,
  BlockGreen,
  BlockBlue,
  Wall,
  Spikes,
  Agent,
  BrokenBox,
};
inline constexpr int kNumChannels = 10;

/// Facing directions of the avatar, clockwise from up.
enum class Facing : std::uint8_t { Up = 0, Right = 1, Down = 2, Left = 3 };

enum class Status : std::uint8_t { Running, Won, Lost, TimedOut };

struct Cell {
  Terrain terrain = Terrain::Floor;
  Object object = Object::None;
  Colour colour = Colour::Red;  // meaningful for Box and Block only
  bool operator==(const Cell&) const = default;
};

struct Position {
  int x = 0;
  int y = 0;
  bool operator==(const Position&) const = default;
  Position operator+(Position o) const { return {x + o.x, y + o.y}; }
};

struct AgentPose {
  Position position;
  Facing facing = Facing::Up;
  bool operator==(const AgentPose&) const = default;
};

/// Complete world state. `x` is the column, `y` the row counted from the top.
struct GridState {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  std::optional<AgentPose> agent;
  int step_count = 0;
  Status status = Status::Running;
  int initial_boxes = 0;
  int converted = 0;
  int broken = 0;
  std::string name;

  bool in_bounds(Position p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  Cell& at(Position p) { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  const Cell& at(Position p) const { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }

  int count(Object object) const;
  int count(Object object, Colour colour) const;

  /// Equality of everything except the step counter.
  bool same_world(const GridState& other) const;
};

/// Parses the ASCII level format:
///   W wall, . floor, A agent, r/g/b boxes, R/G/B blocks, s spikes.
/// An optional first line starting with ';' is a comment. Agents face up.
GridState load_level(std::string_view text);
GridState load_level_file(const std::filesystem::path& path);

/// Renders a state back to the ASCII format (agent facing is not encoded).
std::string render_level(const GridState& state);

/// Returns a copy with the avatar replaced by floor.
GridState without_agent(GridState state);

char colour_glyph(Colour c, bool block);
std::string_view colour_name(Colour c);

}  // namespace cat::clusters
