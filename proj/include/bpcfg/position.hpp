#pragma once

#include <string>
#include <utility>

namespace bpcfg {

enum class Side { left, right };

// Side/depth annotation of a node in a depth-bounded derivation. The root
// sits at (right, 0); depth grows only for left children of right children.
struct Position {
  Side side = Side::right;
  int depth = 0;

  friend bool operator==(Position, Position) = default;
};

inline constexpr Position kRootPosition{Side::right, 0};

inline std::pair<Position, Position> child_positions(Position parent) {
  if (parent.side == Side::left)
    return {{Side::left, parent.depth}, {Side::right, parent.depth}};
  return {{Side::left, parent.depth + 1}, {Side::right, parent.depth}};
}

// R positions live at depths 0..D, L positions at 1..D+1.
inline bool is_valid_position(Position p, int max_depth) {
  if (p.side == Side::right) return p.depth >= 0 && p.depth <= max_depth;
  return p.depth >= 1 && p.depth <= max_depth + 1;
}

inline std::string to_string(Position p) {
  return (p.side == Side::left ? "L" : "R") + std::to_string(p.depth);
}

}  // namespace bpcfg
