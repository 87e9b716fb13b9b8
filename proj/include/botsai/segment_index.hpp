#pragma once

#include <cstddef>
#include <vector>

namespace botsai {

// CSR-style map from each target row to the source rows it reads from.
// Entry e belongs to target entry_target[e] and reads source sources[e].
// A transposed view (by_source) lets backward passes gather per source
// instead of scattering, which keeps the parallel kernels race-free.
struct SegmentIndex {
    std::size_t num_targets = 0;
    std::size_t num_sources = 0;
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> sources;
    std::vector<std::size_t> entry_target;
    std::vector<std::size_t> source_offsets{0};
    std::vector<std::size_t> source_entries;

    static SegmentIndex from_lists(std::size_t num_targets, std::size_t num_sources,
                                   const std::vector<std::vector<std::size_t>>& lists);

    // Every target attends to all S rows of its own contiguous group of S rows.
    static SegmentIndex dense_groups(std::size_t groups, std::size_t group_size);

    std::size_t num_entries() const noexcept { return sources.size(); }
    std::size_t degree(std::size_t target) const noexcept {
        return offsets[target + 1] - offsets[target];
    }
    std::vector<std::vector<std::size_t>> to_lists() const;
};

} // namespace botsai
