#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/ranked_list.hpp"

namespace mmr {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }
    double* row(std::size_t r) { return a.data() + r * cols; }
};

// Trainable dual-encoder state. Both towers are embedding-bag encoders: the
// mean token embedding goes through a linear projection to an n-dimensional
// representation; the query tower optionally adds a projected mean of the
// visual region features. Row 0 of the embedding table is the UNK token.
struct DualEncoderParams {
    Matrix token_embeddings;                       // vocab x embed_dim
    Matrix query_text_w;                           // embed_dim x n
    std::vector<double> query_text_b;              // n
    Matrix query_visual_w;                         // visual_dim x n (rows==0 when absent)
    std::vector<double> query_visual_b;            // n
    Matrix passage_w;                              // embed_dim x n
    std::vector<double> passage_b;                 // n
    std::vector<std::string> vocab;                // row -> token; vocab[0] == "<unk>"
    std::unordered_map<std::string, std::uint32_t> vocab_index;

    std::size_t n() const { return passage_b.size(); }
    std::size_t embed_dim() const { return token_embeddings.cols; }
    std::size_t visual_dim() const { return query_visual_w.rows; }
    bool has_visual() const { return query_visual_w.rows > 0; }

    std::uint32_t token_row(const std::string& token) const;

    // Seeded random init. `tokens` need not be sorted or unique; the vocab
    // is canonicalized (sorted, deduplicated) so init is a pure function of
    // its inputs. visual_dim == 0 disables the visual channel.
    static DualEncoderParams init(const std::vector<std::string>& tokens, std::size_t embed_dim,
                                  std::size_t visual_dim, std::size_t n, std::uint64_t seed);

    void check_finite() const;  // NumericError on NaN/Inf anywhere
};

// Passages are truncated to this many tokens before encoding.
inline constexpr std::size_t kPassageTokenLimit = 384;

std::vector<double> encode_passage(const DualEncoderParams& params, const Passage& passage);

// use_visual=false gives the text-only query representation. With
// use_visual=true, queries lacking visual features fall back to text only
// (with a warning); a feature-dimension mismatch is an error.
std::vector<double> encode_query(const DualEncoderParams& params, const MultiModalQuery& query,
                                 bool use_visual);

// Offline-encoded passage collection: one float32 row per passage, in input
// order. Immutable after build; concurrent searches are safe.
class VectorStore {
public:
    VectorStore() = default;

    static VectorStore build(const DualEncoderParams& params,
                             const std::vector<Passage>& passages, unsigned threads = 1);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }

    // Exact maximum-inner-product top-k: blocked scan with a bounded heap
    // per block, deterministic merge. Results are identical for any thread
    // count.
    RankedList mips_search(std::span<const double> query, std::size_t k, std::string query_id,
                           unsigned threads = 1) const;

    // Snapshot: header (version, n, count), float32 rows, id table.
    void save(const std::string& path) const;
    static VectorStore load(const std::string& path);

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;       // size() * dim_, row-major
    std::vector<std::string> ids_;  // ordinal -> passage id
};

}  // namespace mmr
