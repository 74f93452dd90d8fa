#pragma once

// Expert slots. PartitionId is the seven-way map of the final system; an
// ExpertSlot is the general (tier?, type?) key that also covers the
// three- and nine-partition variants.

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

#include "emgmoe/contamination.hpp"

namespace emgmoe {

enum class PartitionId : std::uint8_t { LowT1, LowT2, LowT3, MidT1, MidT2, MidT3, HighAll };

inline constexpr std::array<PartitionId, 7> kPartitions{PartitionId::LowT1, PartitionId::LowT2, PartitionId::LowT3,
                                                        PartitionId::MidT1, PartitionId::MidT2, PartitionId::MidT3,
                                                        PartitionId::HighAll};

/// High-tier inputs collapse to HighAll regardless of type.
inline constexpr PartitionId partition_for(SnrTier tier, EmgType type) {
  if (tier == SnrTier::High) return PartitionId::HighAll;
  return static_cast<PartitionId>(static_cast<std::uint8_t>(tier) * 3 + static_cast<std::uint8_t>(type));
}

struct ExpertSlot {
  std::optional<SnrTier> tier;
  std::optional<EmgType> type;

  std::string name() const {
    if (tier && type) return to_string(*tier) + "-" + to_string(*type);
    if (tier) return to_string(*tier);
    if (type) return to_string(*type);
    return "all";
  }

  bool high_tier() const { return tier && *tier == SnrTier::High; }

  static ExpertSlot parse(std::string_view s) {
    ExpertSlot slot;
    const auto dash = s.find('-');
    const std::string_view head = s.substr(0, dash);
    if (dash != std::string_view::npos) {
      slot.tier = parse_snr_tier(head);
      slot.type = parse_emg_type(s.substr(dash + 1));
      return slot;
    }
    if (head == "all") return slot;
    if (!head.empty() && head[0] == 't') {
      slot.type = parse_emg_type(head);
    } else {
      slot.tier = parse_snr_tier(head);
    }
    return slot;
  }

  friend auto operator<=>(const ExpertSlot&, const ExpertSlot&) = default;
};

inline ExpertSlot slot_of(PartitionId p) {
  if (p == PartitionId::HighAll) return {SnrTier::High, std::nullopt};
  const auto i = static_cast<std::uint8_t>(p);
  return {static_cast<SnrTier>(i / 3), static_cast<EmgType>(i % 3)};
}

inline std::string to_string(PartitionId p) { return slot_of(p).name(); }

}  // namespace emgmoe
