// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace patchscaler {

enum class GroupLabel : unsigned char { simple = 0, medium = 1, hard = 2 };

inline constexpr std::array<GroupLabel, 3> kAllGroups = {GroupLabel::simple, GroupLabel::medium, GroupLabel::hard};

constexpr std::size_t group_index(GroupLabel g) noexcept { return static_cast<std::size_t>(g); }

constexpr std::string_view group_name(GroupLabel g) noexcept {
    switch (g) {
        case GroupLabel::simple: return "simple";
        case GroupLabel::medium: return "medium";
        case GroupLabel::hard: return "hard";
    }
    return "?";
}

/// Per-patch difficulty labels, aligned with PatchGrid anchor order.
struct QuantifiedMap {
    std::vector<GroupLabel> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::array<std::size_t, 3> counts() const noexcept {
        std::array<std::size_t, 3> c{};
        for (GroupLabel g : labels) ++c[group_index(g)];
        return c;
    }
};

}  // namespace patchscaler
