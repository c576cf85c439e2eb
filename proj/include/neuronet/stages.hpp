#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace neuronet {

enum class Stage : std::uint8_t { W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

inline constexpr std::size_t kNumStages = 5;
inline constexpr std::array<Stage, kNumStages> kAllStages = {Stage::W, Stage::N1, Stage::N2, Stage::N3,
                                                             Stage::REM};

inline const char* stage_name(Stage s) {
  static const char* names[] = {"W", "N1", "N2", "N3", "REM"};
  return names[static_cast<int>(s)];
}

inline int stage_index(Stage s) { return static_cast<int>(s); }

inline Stage stage_from_index(int i) { return static_cast<Stage>(i); }

// Canonicalises a raw scoring token ("Sleep stage 4", "R", "n2", "Movement
// time", ...) to one of W, N1, N2, N3, N4, REM, M, ?, Movement, Unknown.
// Throws UnknownStage for anything else.
std::string canonical_stage_token(std::string_view raw);

// W/N1/N2/N3/REM map directly, N4 merges into N3. M, ?, Movement and Unknown
// return nullopt: the epoch is dropped.
std::optional<Stage> map_stage_token(std::string_view canonical);

std::optional<Stage> parse_stage_name(std::string_view name);

}  // namespace neuronet
