#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace bugprio {

/// Bugzilla priority scale. P1 is the most urgent level.
enum class Priority : unsigned char { P1 = 0, P2, P3, P4, P5, Unknown };

inline constexpr std::size_t kNumPriorities = 5;

inline constexpr std::array<Priority, kNumPriorities> kAllPriorities = {
    Priority::P1, Priority::P2, Priority::P3, Priority::P4, Priority::P5};

constexpr std::size_t index_of(Priority p) { return static_cast<std::size_t>(p); }

constexpr Priority priority_from_index(std::size_t i) {
  return i < kNumPriorities ? static_cast<Priority>(i) : Priority::Unknown;
}

constexpr bool is_known(Priority p) { return p != Priority::Unknown; }

std::string_view to_string(Priority p);

/// Accepts "P1".."P5" (case-insensitive, surrounding blanks ignored) and the
/// bare digits "1".."5". Everything else maps to Unknown.
Priority parse_priority(std::string_view text);

}  // namespace bugprio
