#include "agent_unlearn/grid_io.hpp"

#include <optional>
#include <vector>

#include "agent_unlearn/error.hpp"

namespace au::env {

using nlohmann::json;

std::string to_text(const GridSpec& spec) {
  std::string out;
  out.reserve(static_cast<std::size_t>((spec.width() + 1) * spec.height()));
  for (int r = 0; r < spec.height(); ++r) {
    for (int c = 0; c < spec.width(); ++c) {
      const Coord cell{r, c};
      if (cell == spec.start()) {
        out.push_back('S');
        continue;
      }
      switch (spec.at(cell)) {
        case CellKind::kObstacle: out.push_back('#'); break;
        case CellKind::kTreasure: out.push_back('T'); break;
        case CellKind::kEmpty: out.push_back('.'); break;
      }
    }
    out.push_back('\n');
  }
  return out;
}

GridSpec from_text(std::string_view text, std::string env_id) {
  std::vector<std::string_view> rows;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    rows.push_back(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  if (rows.empty()) fail(ErrorCode::kParse, "grid text is empty");
  const auto width = rows.front().size();
  std::vector<CellKind> cells;
  std::optional<Coord> start;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      fail(ErrorCode::kParse, "grid row " + std::to_string(r) + " has length " +
                                  std::to_string(rows[r].size()) + ", expected " +
                                  std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      switch (rows[r][c]) {
        case '#': cells.push_back(CellKind::kObstacle); break;
        case 'T': cells.push_back(CellKind::kTreasure); break;
        case '.': cells.push_back(CellKind::kEmpty); break;
        case 'S':
          if (start) fail(ErrorCode::kParse, "grid text has more than one start cell");
          start = Coord{static_cast<int>(r), static_cast<int>(c)};
          cells.push_back(CellKind::kEmpty);
          break;
        default:
          fail(ErrorCode::kParse, std::string("unexpected grid character '") + rows[r][c] +
                                      "' at row " + std::to_string(r));
      }
    }
  }
  if (!start) fail(ErrorCode::kParse, "grid text has no start cell");
  GridSpec spec(static_cast<int>(width), static_cast<int>(rows.size()), std::move(cells), *start,
                std::move(env_id));
  spec.check_invariants();
  return spec;
}

json coord_to_json(const Coord& c) { return json::array({c.row, c.col}); }

Coord coord_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    fail(ErrorCode::kParse, "coordinate must be a [row, col] integer pair, got " + j.dump());
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

json to_json(const GridSpec& spec) {
  json obstacles = json::array();
  for (const Coord& c : spec.obstacles()) obstacles.push_back(coord_to_json(c));
  json treasures = json::array();
  for (const Coord& c : spec.treasures()) treasures.push_back(coord_to_json(c));
  return json{{"width", spec.width()},
              {"height", spec.height()},
              {"start", coord_to_json(spec.start())},
              {"obstacles", std::move(obstacles)},
              {"treasures", std::move(treasures)},
              {"env_id", spec.env_id()}};
}

GridSpec from_json(const json& doc) {
  try {
    const int width = doc.at("width").get<int>();
    const int height = doc.at("height").get<int>();
    if (width <= 0 || height <= 0) fail(ErrorCode::kParse, "grid dimensions must be positive");
    std::vector<CellKind> cells(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                                CellKind::kEmpty);
    auto place = [&](const json& list, CellKind kind) {
      for (const json& j : list) {
        const Coord c = coord_from_json(j);
        if (c.row < 0 || c.col < 0 || c.row >= height || c.col >= width) {
          fail(ErrorCode::kParse, "cell " + to_string(c) + " is out of bounds");
        }
        auto& slot = cells[static_cast<std::size_t>(c.row * width + c.col)];
        if (slot != CellKind::kEmpty) fail(ErrorCode::kParse, "cell " + to_string(c) + " listed twice");
        slot = kind;
      }
    };
    place(doc.at("obstacles"), CellKind::kObstacle);
    place(doc.at("treasures"), CellKind::kTreasure);
    GridSpec spec(width, height, std::move(cells), coord_from_json(doc.at("start")),
                  doc.at("env_id").get<std::string>());
    spec.check_invariants();
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed grid JSON: ") + e.what());
  }
}

std::string to_json_text(const GridSpec& spec) { return to_json(spec).dump(2) + "\n"; }

GridSpec from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("grid JSON does not parse: ") + e.what());
  }
  return from_json(doc);
}

}  // namespace au::env
