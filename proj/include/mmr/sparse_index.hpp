#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/fusion.hpp"
#include "mmr/ranked_list.hpp"

namespace mmr {

struct Bm25Params {
    double k1 = 0.9;  // untuned defaults, also used for training-data runs
    double b = 0.4;

    void validate() const;  // k1 >= 0, b in [0, 1]
};

// Inverted index with the document statistics BM25 needs. Write-once: built
// from a passage stream, then immutable. Concurrent reads are safe.
class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;  // ordinal
        std::uint32_t tf = 0;
    };

    // Builds from a pull-based passage source (so a collection larger than
    // memory can be indexed). Throws on duplicate ids or an empty stream.
    static InvertedIndex build(const std::function<std::optional<Passage>()>& source);
    static InvertedIndex build(const std::vector<Passage>& passages);

    std::size_t num_docs() const { return doc_ids_.size(); }
    double avg_doc_len() const { return avg_len_; }
    std::uint32_t doc_length(const std::string& passage_id) const;
    std::size_t doc_frequency(const std::string& term) const;
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<Posting>* postings(const std::string& term) const;

    // Okapi BM25 with the non-negative "+1 inside the log" idf:
    //   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    //   score  = sum_t idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
    // Each occurrence of a repeated query token contributes separately.
    double bm25_score(const Bm25Params& params, const std::vector<std::string>& query_tokens,
                      const std::string& passage_id) const;

    // Top-k by BM25 over tokenize(query_text). Zero-scoring passages are
    // omitted, so the result may be shorter than k.
    RankedList search(const Bm25Params& params, std::string_view query_text, std::size_t k,
                      std::string query_id) const;

    // Lossless binary snapshot.
    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

private:
    std::vector<std::string> doc_ids_;                     // ordinal -> id
    std::unordered_map<std::string, std::uint32_t> ord_;   // id -> ordinal
    std::vector<std::uint32_t> doc_lens_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;

    double idf(std::size_t df) const;
    double term_contribution(const Bm25Params& params, double idf_t, std::uint32_t tf,
                             std::uint32_t doc_len) const;
};

// Grid search over k1 in {0.5, 0.7, ..., 1.5} x b in {0.2, 0.4, 0.6, 0.8}
// maximizing validation MRR@5 of the expanded-and-fused retrieval; ties go
// to the lexicographically smaller (k1, b).
struct TuneResult {
    struct Cell {
        Bm25Params params;
        double mrr = 0.0;
    };
    Bm25Params best;
    double best_mrr = 0.0;
    std::vector<Cell> grid;  // lexicographic (k1, b) order
};

TuneResult tune_bm25(const InvertedIndex& index, const std::vector<MultiModalQuery>& queries,
                     const PassageMap& passages, ExpansionMode mode, const FusionMethod& fusion,
                     std::size_t depth = 100);

}  // namespace mmr
