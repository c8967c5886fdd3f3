#pragma once

#include <string>
#include <vector>

#include "mmr/ranked_list.hpp"

namespace mmr {

// TREC run format: `query_id Q0 passage_id rank score tag`, one line per
// entry, ranks 1-based. Scores are written with full double precision so a
// file round trip reproduces in-process results exactly.
void write_run(const std::string& path, const std::vector<RankedList>& lists,
               const std::string& tag);

// Reads a run file back into one RankedList per query, in order of first
// appearance. Ranks per query must be exactly 1..n.
std::vector<RankedList> read_run(const std::string& path);

}  // namespace mmr
