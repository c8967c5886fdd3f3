#pragma once

#include <string>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/ranked_list.hpp"

namespace mmr {

struct QueryMetrics {
    double mrr = 0.0;
    double p = 0.0;
};

struct EvalResult {
    double mean_mrr_at_k = 0.0;
    double mean_p_at_k = 0.0;
    std::vector<std::pair<std::string, QueryMetrics>> per_query;  // query-file order
};

// Relevance bit per entry: a passage is relevant iff it contains one of the
// query's ground-truth answers.
std::vector<bool> judge(const RankedList& ranked, const MultiModalQuery& query,
                        const PassageMap& passages);

// 1/r for the first relevant rank r <= k, else 0.
double mrr_at_k(const std::vector<bool>& relevance, std::size_t k = 5);

// Relevant count in the top k divided by k (short lists pad as non-relevant).
double p_at_k(const std::vector<bool>& relevance, std::size_t k = 5);

// Scores a run against every query in the list; queries missing from the
// run score 0 on both metrics so different methods share one denominator.
// A run query id absent from `queries` is an error.
EvalResult evaluate(const std::vector<RankedList>& run,
                    const std::vector<MultiModalQuery>& queries, const PassageMap& passages,
                    std::size_t k = 5);

}  // namespace mmr
