#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmr/ranked_list.hpp"

namespace mmr {

enum class FusionKind { CombMax, CombSum, Rrf };

struct FusionMethod {
    FusionKind kind = FusionKind::CombSum;
    double rrf_const = 60.0;

    static FusionMethod comb_max() { return {FusionKind::CombMax, 60.0}; }
    static FusionMethod comb_sum() { return {FusionKind::CombSum, 60.0}; }
    static FusionMethod rrf(double constant = 60.0) { return {FusionKind::Rrf, constant}; }
};

const char* to_string(FusionKind kind);
std::optional<FusionKind> fusion_kind_from_string(std::string_view name);

// Consolidate the ranked lists produced by one query set into a single
// list. A passage absent from a list simply contributes nothing there. All
// inputs must carry the same query id.

// Fused score = max over the lists containing the passage.
RankedList comb_max(const std::vector<RankedList>& lists);

// Fused score = sum over the lists containing the passage.
RankedList comb_sum(const std::vector<RankedList>& lists);

// Reciprocal rank fusion: score(p) = sum over lists of 1/(constant + rank).
RankedList rrf(const std::vector<RankedList>& lists, double constant = 60.0);

RankedList fuse(const std::vector<RankedList>& lists, const FusionMethod& method);

}  // namespace mmr
