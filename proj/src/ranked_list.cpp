#include "mmr/ranked_list.hpp"

#include <algorithm>

namespace mmr {

RankedList make_ranked_list(std::string query_id,
                            std::vector<std::pair<std::string, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    RankedList list;
    list.query_id = std::move(query_id);
    list.entries.reserve(scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
        list.entries.push_back({std::move(scored[i].first), scored[i].second,
                                static_cast<std::uint32_t>(i + 1)});
    }
    return list;
}

void truncate(RankedList& list, std::size_t k) {
    if (list.entries.size() > k) list.entries.resize(k);
}

}  // namespace mmr
