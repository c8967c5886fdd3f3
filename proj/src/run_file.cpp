#include "mmr/run_file.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mmr/errors.hpp"

namespace mmr {

void write_run(const std::string& path, const std::vector<RankedList>& lists,
               const std::string& tag) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write run file: " + path);
    char score_buf[40];
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            std::snprintf(score_buf, sizeof score_buf, "%.17g", e.score);
            out << list.query_id << " Q0 " << e.passage_id << ' ' << e.rank << ' ' << score_buf
                << ' ' << tag << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

std::vector<RankedList> read_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run file: " + path);

    std::vector<RankedList> lists;
    std::unordered_map<std::string, std::size_t> index_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, pid, tag;
        std::uint32_t rank = 0;
        double score = 0.0;
        if (!(ss >> qid >> q0 >> pid >> rank >> score >> tag)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed run line");
        }
        if (!std::isfinite(score)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": non-finite score");
        }
        auto [it, inserted] = index_of.try_emplace(qid, lists.size());
        if (inserted) lists.push_back({qid, {}});
        lists[it->second].entries.push_back({pid, score, rank});
    }

    for (auto& list : lists) {
        std::sort(list.entries.begin(), list.entries.end(),
                  [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            if (list.entries[i].rank != i + 1) {
                throw DataError(path + ": query " + list.query_id +
                                " has non-contiguous ranks (expected " + std::to_string(i + 1) +
                                ", got " + std::to_string(list.entries[i].rank) + ")");
            }
        }
    }
    return lists;
}

}  // namespace mmr
