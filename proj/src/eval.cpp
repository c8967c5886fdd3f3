#include "mmr/eval.hpp"

#include <unordered_map>

#include "mmr/errors.hpp"

namespace mmr {

std::vector<bool> judge(const RankedList& ranked, const MultiModalQuery& query,
                        const PassageMap& passages) {
    if (query.answers.empty()) {
        throw DataError("query \"" + query.id + "\" has no answers to judge against");
    }
    std::vector<std::vector<std::string>> needles;
    needles.reserve(query.answers.size());
    for (const auto& a : query.answers) needles.push_back(tokenize(a));

    std::vector<bool> relevance;
    relevance.reserve(ranked.entries.size());
    for (const auto& e : ranked.entries) {
        auto it = passages.find(e.passage_id);
        if (it == passages.end()) {
            throw DataError("run references unknown passage id \"" + e.passage_id + "\"");
        }
        relevance.push_back(contains_answer_tokens(tokenize(it->second.text), needles));
    }
    return relevance;
}

double mrr_at_k(const std::vector<bool>& relevance, std::size_t k) {
    const std::size_t limit = std::min(k, relevance.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (relevance[i]) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

double p_at_k(const std::vector<bool>& relevance, std::size_t k) {
    const std::size_t limit = std::min(k, relevance.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < limit; ++i) {
        if (relevance[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

EvalResult evaluate(const std::vector<RankedList>& run,
                    const std::vector<MultiModalQuery>& queries, const PassageMap& passages,
                    std::size_t k) {
    std::unordered_map<std::string, const RankedList*> by_qid;
    by_qid.reserve(run.size());
    for (const auto& list : run) by_qid.emplace(list.query_id, &list);

    std::unordered_map<std::string, bool> known;
    known.reserve(queries.size());
    for (const auto& q : queries) known.emplace(q.id, true);
    for (const auto& list : run) {
        if (!known.count(list.query_id)) {
            throw DataError("run references unknown query id \"" + list.query_id + "\"");
        }
    }

    EvalResult result;
    result.per_query.reserve(queries.size());
    double sum_mrr = 0.0;
    double sum_p = 0.0;
    for (const auto& q : queries) {
        QueryMetrics m;
        if (auto it = by_qid.find(q.id); it != by_qid.end()) {
            const auto relevance = judge(*it->second, q, passages);
            m.mrr = mrr_at_k(relevance, k);
            m.p = p_at_k(relevance, k);
        }
        sum_mrr += m.mrr;
        sum_p += m.p;
        result.per_query.emplace_back(q.id, m);
    }
    const auto n = static_cast<double>(queries.size());
    if (!queries.empty()) {
        result.mean_mrr_at_k = sum_mrr / n;
        result.mean_p_at_k = sum_p / n;
    }
    return result;
}

}  // namespace mmr
