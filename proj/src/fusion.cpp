#include "mmr/fusion.hpp"

#include <unordered_map>

#include "mmr/errors.hpp"

namespace mmr {

namespace {

// Validates inputs and accumulates per-passage scores in list order, so
// floating-point sums are reproducible.
RankedList accumulate(const std::vector<RankedList>& lists,
                      double (*combine)(double acc, const RankedEntry& e, double c),
                      double constant) {
    if (lists.empty()) throw DataError("fusion requires at least one ranked list");
    const std::string& qid = lists.front().query_id;
    for (const auto& list : lists) {
        if (list.query_id != qid) {
            throw DataError("fusion inputs mix query ids: \"" + qid + "\" vs \"" +
                            list.query_id + "\"");
        }
    }

    std::unordered_map<std::string, double> score;
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            auto [it, inserted] = score.try_emplace(e.passage_id, 0.0);
            if (inserted) scored.emplace_back(e.passage_id, 0.0);
            it->second = combine(it->second, e, constant);
        }
    }
    for (auto& [id, s] : scored) s = score.at(id);
    return make_ranked_list(qid, std::move(scored));
}

double sum_combine(double acc, const RankedEntry& e, double) { return acc + e.score; }
double rrf_combine(double acc, const RankedEntry& e, double c) {
    return acc + 1.0 / (c + static_cast<double>(e.rank));
}

}  // namespace

const char* to_string(FusionKind kind) {
    switch (kind) {
        case FusionKind::CombMax: return "combmax";
        case FusionKind::CombSum: return "combsum";
        case FusionKind::Rrf: return "rrf";
    }
    return "?";
}

std::optional<FusionKind> fusion_kind_from_string(std::string_view name) {
    if (name == "combmax") return FusionKind::CombMax;
    if (name == "combsum") return FusionKind::CombSum;
    if (name == "rrf") return FusionKind::Rrf;
    return std::nullopt;
}

RankedList comb_max(const std::vector<RankedList>& lists) {
    if (lists.empty()) throw DataError("fusion requires at least one ranked list");
    const std::string& qid = lists.front().query_id;
    for (const auto& list : lists) {
        if (list.query_id != qid) {
            throw DataError("fusion inputs mix query ids: \"" + qid + "\" vs \"" +
                            list.query_id + "\"");
        }
    }
    std::unordered_map<std::string, double> best;
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            auto [it, inserted] = best.try_emplace(e.passage_id, e.score);
            if (inserted) {
                scored.emplace_back(e.passage_id, e.score);
            } else if (e.score > it->second) {
                it->second = e.score;
            }
        }
    }
    for (auto& [id, s] : scored) s = best.at(id);
    return make_ranked_list(qid, std::move(scored));
}

RankedList comb_sum(const std::vector<RankedList>& lists) {
    return accumulate(lists, sum_combine, 0.0);
}

RankedList rrf(const std::vector<RankedList>& lists, double constant) {
    if (constant <= 0.0) throw DataError("rrf constant must be positive");
    return accumulate(lists, rrf_combine, constant);
}

RankedList fuse(const std::vector<RankedList>& lists, const FusionMethod& method) {
    switch (method.kind) {
        case FusionKind::CombMax: return comb_max(lists);
        case FusionKind::CombSum: return comb_sum(lists);
        case FusionKind::Rrf: return rrf(lists, method.rrf_const);
    }
    throw DataError("unknown fusion method");
}

}  // namespace mmr
