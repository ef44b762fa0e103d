#pragma once

#include <array>
#include <string_view>

namespace trajeval {

// The closed behaviour taxonomy. Class indices are stable and double as row
// and column indices of confusion matrices.
enum class BehaviorLabel : int {
  wave = 0,
  shake = 1,
  pick = 2,
  walk = 3,
  pick_walk = 4,
  still = 5,
  pick_still = 6,
};

inline constexpr int kNumBehaviors = 7;

constexpr std::array<BehaviorLabel, kNumBehaviors> all_behaviors() {
  return {BehaviorLabel::wave,      BehaviorLabel::shake, BehaviorLabel::pick,
          BehaviorLabel::walk,      BehaviorLabel::pick_walk,
          BehaviorLabel::still,     BehaviorLabel::pick_still};
}

constexpr int label_index(BehaviorLabel b) { return static_cast<int>(b); }

std::string_view to_string(BehaviorLabel b);

// Parses one of the seven lowercase tokens; throws std::invalid_argument on
// anything else (the label set is closed).
BehaviorLabel parse_behavior(std::string_view token);

}  // namespace trajeval
