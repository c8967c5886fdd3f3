#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mmr {

struct RankedEntry {
    std::string passage_id;
    double score = 0.0;
    std::uint32_t rank = 0;  // 1-based, contiguous
};

// One query's ordered results. Entries are sorted by score descending with
// ties broken by passage id ascending, so rankings are reproducible bit for
// bit regardless of construction order.
struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;
};

// Sorts scored passages with the standard tie-break and assigns ranks 1..n.
RankedList make_ranked_list(std::string query_id,
                            std::vector<std::pair<std::string, double>> scored);

void truncate(RankedList& list, std::size_t k);

}  // namespace mmr
