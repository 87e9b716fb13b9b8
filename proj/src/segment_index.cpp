#include "botsai/segment_index.hpp"

#include "botsai/errors.hpp"

#include <string>

namespace botsai {

SegmentIndex SegmentIndex::from_lists(std::size_t num_targets, std::size_t num_sources,
                                      const std::vector<std::vector<std::size_t>>& lists) {
    if (lists.size() != num_targets) {
        throw DimensionError("segment index: " + std::to_string(lists.size()) +
                             " lists for " + std::to_string(num_targets) + " targets");
    }
    SegmentIndex idx;
    idx.num_targets = num_targets;
    idx.num_sources = num_sources;
    idx.offsets.assign(1, 0);
    idx.offsets.reserve(num_targets + 1);
    for (std::size_t t = 0; t < num_targets; ++t) {
        for (std::size_t s : lists[t]) {
            if (s >= num_sources) {
                throw DimensionError("segment index: source " + std::to_string(s) +
                                     " out of range " + std::to_string(num_sources));
            }
            idx.sources.push_back(s);
            idx.entry_target.push_back(t);
        }
        idx.offsets.push_back(idx.sources.size());
    }

    std::vector<std::size_t> counts(num_sources, 0);
    for (std::size_t s : idx.sources) {
        ++counts[s];
    }
    idx.source_offsets.assign(num_sources + 1, 0);
    for (std::size_t s = 0; s < num_sources; ++s) {
        idx.source_offsets[s + 1] = idx.source_offsets[s] + counts[s];
    }
    idx.source_entries.assign(idx.sources.size(), 0);
    std::vector<std::size_t> cursor(idx.source_offsets.begin(), idx.source_offsets.end() - 1);
    for (std::size_t e = 0; e < idx.sources.size(); ++e) {
        idx.source_entries[cursor[idx.sources[e]]++] = e;
    }
    return idx;
}

SegmentIndex SegmentIndex::dense_groups(std::size_t groups, std::size_t group_size) {
    std::vector<std::vector<std::size_t>> lists(groups * group_size);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t i = 0; i < group_size; ++i) {
            auto& l = lists[g * group_size + i];
            for (std::size_t j = 0; j < group_size; ++j) {
                l.push_back(g * group_size + j);
            }
        }
    }
    return from_lists(groups * group_size, groups * group_size, lists);
}

std::vector<std::vector<std::size_t>> SegmentIndex::to_lists() const {
    std::vector<std::vector<std::size_t>> lists(num_targets);
    for (std::size_t t = 0; t < num_targets; ++t) {
        lists[t].assign(sources.begin() + static_cast<std::ptrdiff_t>(offsets[t]),
                        sources.begin() + static_cast<std::ptrdiff_t>(offsets[t + 1]));
    }
    return lists;
}

} // namespace botsai
