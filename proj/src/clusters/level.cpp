#include "cat/clusters/level.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace cat::clusters {

int GridState::count(Object object) const {
  int n = 0;
  for (const auto& c : cells) n += c.object == object;
  return n;
}

int GridState::count(Object object, Colour colour) const {
  int n = 0;
  for (const auto& c : cells) n += c.object == object && c.colour == colour;
  return n;
}

bool GridState::same_world(const GridState& other) const {
  return width == other.width && height == other.height && cells == other.cells && agent == other.agent &&
         status == other.status && converted == other.converted && broken == other.broken;
}

char colour_glyph(Colour c, bool block) {
  static constexpr char kBoxes[] = {'r', 'g', 'b'};
  static constexpr char kBlocks[] = {'R', 'G', 'B'};
  return block ? kBlocks[static_cast<int>(c)] : kBoxes[static_cast<int>(c)];
}

std::string_view colour_name(Colour c) {
  switch (c) {
    case Colour::Red: return "red";
    case Colour::Green: return "green";
    case Colour::Blue: return "blue";
  }
  return "?";
}

GridState load_level(std::string_view text) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && !line.empty() && line.front() == ';') {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw LevelError("level has no rows");

  GridState state;
  state.width = static_cast<int>(rows.front().size());
  state.height = static_cast<int>(rows.size());
  state.cells.resize(static_cast<std::size_t>(state.width * state.height));
  for (int y = 0; y < state.height; ++y) {
    const auto& row = rows[static_cast<std::size_t>(y)];
    if (static_cast<int>(row.size()) != state.width)
      throw LevelError(fmt::format("row {} has {} cells, expected {} (level must be rectangular)", y, row.size(),
                                   state.width));
    for (int x = 0; x < state.width; ++x) {
      Cell& cell = state.at({x, y});
      char g = row[static_cast<std::size_t>(x)];
      switch (g) {
        case 'W': cell.terrain = Terrain::Wall; break;
        case '.': break;
        case 's': cell.terrain = Terrain::Spikes; break;
        case 'r': cell = {Terrain::Floor, Object::Box, Colour::Red}; break;
        case 'g': cell = {Terrain::Floor, Object::Box, Colour::Green}; break;
        case 'b': cell = {Terrain::Floor, Object::Box, Colour::Blue}; break;
        case 'R': cell = {Terrain::Floor, Object::Block, Colour::Red}; break;
        case 'G': cell = {Terrain::Floor, Object::Block, Colour::Green}; break;
        case 'B': cell = {Terrain::Floor, Object::Block, Colour::Blue}; break;
        case 'A':
          if (state.agent) throw LevelError(fmt::format("second agent at row {}, column {}", y, x));
          cell.object = Object::Agent;
          state.agent = AgentPose{{x, y}, Facing::Up};
          break;
        default:
          throw LevelError(fmt::format("unknown glyph '{}' at row {}, column {}", g, y, x));
      }
    }
  }
  state.initial_boxes = state.count(Object::Box);
  state.status = state.initial_boxes == 0 ? Status::Won : Status::Running;
  return state;
}

GridState load_level_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LevelError(fmt::format("cannot open level file '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto state = load_level(buffer.str());
  state.name = path.stem().string();
  return state;
}

std::string render_level(const GridState& state) {
  std::string out;
  for (int y = 0; y < state.height; ++y) {
    for (int x = 0; x < state.width; ++x) {
      const Cell& c = state.at({x, y});
      char g = '.';
      switch (c.object) {
        case Object::Box: g = colour_glyph(c.colour, false); break;
        case Object::Block: g = colour_glyph(c.colour, true); break;
        case Object::Agent: g = 'A'; break;
        case Object::BrokenBox: g = 'x'; break;
        case Object::None:
          g = c.terrain == Terrain::Wall ? 'W' : c.terrain == Terrain::Spikes ? 's' : '.';
          break;
      }
      out.push_back(g);
    }
    out.push_back('\n');
  }
  return out;
}

GridState without_agent(GridState state) {
  if (state.agent) {
    state.at(state.agent->position).object = Object::None;
    state.agent.reset();
  }
  return state;
}

}  // namespace cat::clusters
