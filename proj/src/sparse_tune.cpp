#include <array>

#include "mmr/errors.hpp"
#include "mmr/eval.hpp"
#include "mmr/fusion.hpp"
#include "mmr/sparse_index.hpp"

namespace mmr {

namespace {

double mean_mrr(const InvertedIndex& index, const Bm25Params& params,
                const std::vector<MultiModalQuery>& queries, const PassageMap& passages,
                ExpansionMode mode, const FusionMethod& fusion, std::size_t depth) {
    double sum = 0.0;
    for (const auto& q : queries) {
        std::vector<RankedList> lists;
        for (const auto& text : expand_query(q, mode)) {
            lists.push_back(index.search(params, text, depth, q.id));
        }
        const RankedList fused = fuse(lists, fusion);
        sum += mrr_at_k(judge(fused, q, passages), 5);
    }
    return sum / static_cast<double>(queries.size());
}

}  // namespace

TuneResult tune_bm25(const InvertedIndex& index, const std::vector<MultiModalQuery>& queries,
                     const PassageMap& passages, ExpansionMode mode, const FusionMethod& fusion,
                     std::size_t depth) {
    if (queries.empty()) throw DataError("bm25 tuning requires a non-empty query set");

    constexpr std::array<double, 6> k1_grid = {0.5, 0.7, 0.9, 1.1, 1.3, 1.5};
    constexpr std::array<double, 4> b_grid = {0.2, 0.4, 0.6, 0.8};

    TuneResult result;
    bool first = true;
    for (const double k1 : k1_grid) {
        for (const double b : b_grid) {
            const Bm25Params params{k1, b};
            const double mrr = mean_mrr(index, params, queries, passages, mode, fusion, depth);
            result.grid.push_back({params, mrr});
            // Lexicographic grid order, strict improvement: ties keep the
            // smaller (k1, b).
            if (first || mrr > result.best_mrr) {
                result.best = params;
                result.best_mrr = mrr;
                first = false;
            }
        }
    }
    return result;
}

}  // namespace mmr
