#include "mmr/dense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <queue>
#include <set>
#include <thread>

#include "mmr/binary_io.hpp"
#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace {

constexpr char kStoreMagic[9] = "MMRVSTR1";
constexpr std::uint32_t kStoreVersion = 1;

void fill_normal(Rng& rng, std::vector<double>& values, double scale) {
    for (auto& v : values) v = scale * rng.next_normal();
}

void check_matrix_finite(const Matrix& m, const char* name) {
    for (const double v : m.a) {
        if (!std::isfinite(v)) throw NumericError(std::string(name) + " contains non-finite values");
    }
}

void check_vector_finite(const std::vector<double>& v, const char* name) {
    for (const double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(name) + " contains non-finite values");
    }
}

// out += x . W  (x: 1 x rows, W: rows x cols, out: 1 x cols)
void add_projected(const std::vector<double>& x, const Matrix& w, std::vector<double>& out) {
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wrow = w.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) out[j] += xi * wrow[j];
    }
}

}  // namespace

std::uint32_t DualEncoderParams::token_row(const std::string& token) const {
    auto it = vocab_index.find(token);
    return it == vocab_index.end() ? 0u : it->second;
}

DualEncoderParams DualEncoderParams::init(const std::vector<std::string>& tokens,
                                          std::size_t embed_dim, std::size_t visual_dim,
                                          std::size_t n, std::uint64_t seed) {
    if (embed_dim == 0 || n == 0) throw DataError("encoder dimensions must be positive");

    DualEncoderParams p;
    std::set<std::string> unique(tokens.begin(), tokens.end());
    unique.erase("<unk>");
    p.vocab.reserve(unique.size() + 1);
    p.vocab.push_back("<unk>");
    p.vocab.insert(p.vocab.end(), unique.begin(), unique.end());
    p.vocab_index.reserve(p.vocab.size());
    for (std::uint32_t i = 0; i < p.vocab.size(); ++i) p.vocab_index.emplace(p.vocab[i], i);

    Rng rng(seed);
    p.token_embeddings = Matrix(p.vocab.size(), embed_dim);
    fill_normal(rng, p.token_embeddings.a, 1.0);

    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    p.query_text_w = Matrix(embed_dim, n);
    fill_normal(rng, p.query_text_w.a, proj_scale);
    p.query_text_b.assign(n, 0.0);

    p.passage_w = Matrix(embed_dim, n);
    fill_normal(rng, p.passage_w.a, proj_scale);
    p.passage_b.assign(n, 0.0);

    if (visual_dim > 0) {
        p.query_visual_w = Matrix(visual_dim, n);
        fill_normal(rng, p.query_visual_w.a, 1.0 / std::sqrt(static_cast<double>(visual_dim)));
        p.query_visual_b.assign(n, 0.0);
    }
    return p;
}

void DualEncoderParams::check_finite() const {
    check_matrix_finite(token_embeddings, "token_embeddings");
    check_matrix_finite(query_text_w, "query_text_w");
    check_vector_finite(query_text_b, "query_text_b");
    check_matrix_finite(query_visual_w, "query_visual_w");
    check_vector_finite(query_visual_b, "query_visual_b");
    check_matrix_finite(passage_w, "passage_w");
    check_vector_finite(passage_b, "passage_b");
}

namespace detail {

// Mean embedding of a token sequence; zero vector when there are no tokens.
std::vector<double> mean_embedding(const DualEncoderParams& params,
                                   const std::vector<std::string>& tokens) {
    std::vector<double> x(params.embed_dim(), 0.0);
    if (tokens.empty()) return x;
    for (const auto& t : tokens) {
        const double* row = params.token_embeddings.row(params.token_row(t));
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (auto& v : x) v *= inv;
    return x;
}

std::vector<std::string> passage_tokens(const Passage& passage) {
    auto tokens = tokenize(passage.text);
    if (tokens.size() > kPassageTokenLimit) tokens.resize(kPassageTokenLimit);
    return tokens;
}

std::vector<double> mean_visual(const MultiModalQuery& query) {
    std::vector<double> x(query.visual_dim(), 0.0);
    for (const auto& v : query.visual_features) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += v[j];
    }
    const double inv = 1.0 / static_cast<double>(query.visual_features.size());
    for (auto& v : x) v *= inv;
    return x;
}

}  // namespace detail

std::vector<double> encode_passage(const DualEncoderParams& params, const Passage& passage) {
    const auto x = detail::mean_embedding(params, detail::passage_tokens(passage));
    std::vector<double> out = params.passage_b;
    add_projected(x, params.passage_w, out);
    return out;
}

std::vector<double> encode_query(const DualEncoderParams& params, const MultiModalQuery& query,
                                 bool use_visual) {
    const auto x = detail::mean_embedding(params, tokenize(query.question));
    std::vector<double> out = params.query_text_b;
    add_projected(x, params.query_text_w, out);

    if (use_visual) {
        if (!query.has_visual()) {
            std::cerr << "warning: query " << query.id
                      << " has no visual features; falling back to text only\n";
        } else if (!params.has_visual()) {
            std::cerr << "warning: encoder has no visual projection; query " << query.id
                      << " uses text only\n";
        } else {
            if (query.visual_dim() != params.visual_dim()) {
                throw DataError("query " + query.id + " visual dimension " +
                                std::to_string(query.visual_dim()) + " does not match encoder " +
                                std::to_string(params.visual_dim()));
            }
            const auto xv = detail::mean_visual(query);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += params.query_visual_b[j];
            add_projected(xv, params.query_visual_w, out);
        }
    }
    return out;
}

VectorStore VectorStore::build(const DualEncoderParams& params,
                               const std::vector<Passage>& passages, unsigned threads) {
    VectorStore store;
    store.dim_ = params.n();
    store.ids_.reserve(passages.size());
    {
        std::unordered_map<std::string, bool> seen;
        seen.reserve(passages.size());
        for (const auto& p : passages) {
            if (!seen.emplace(p.id, true).second) {
                throw DataError("duplicate passage id \"" + p.id + "\"");
            }
            store.ids_.push_back(p.id);
        }
    }
    store.data_.resize(passages.size() * store.dim_);

    const auto encode_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto v = encode_passage(params, passages[i]);
            float* out = store.data_.data() + i * store.dim_;
            for (std::size_t j = 0; j < store.dim_; ++j) out[j] = static_cast<float>(v[j]);
        }
    };

    if (threads <= 1 || passages.size() < 2 * threads) {
        encode_range(0, passages.size());
    } else {
        // Deterministic row placement: each worker writes its own slice.
        std::vector<std::thread> workers;
        const std::size_t chunk = (passages.size() + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(passages.size(), begin + chunk);
            if (begin >= end) break;
            workers.emplace_back(encode_range, begin, end);
        }
        for (auto& w : workers) w.join();
    }
    return store;
}

namespace {

struct Hit {
    double score;
    std::uint32_t ordinal;
};

// Strict "a outranks b": higher score, ties to the smaller passage id.
// With this as the heap comparator the top element is the current worst.
struct HitBetter {
    const std::vector<std::string>* ids;
    bool operator()(const Hit& a, const Hit& b) const {
        if (a.score != b.score) return a.score > b.score;
        return (*ids)[a.ordinal] < (*ids)[b.ordinal];
    }
};

void scan_block(const std::vector<float>& data, const std::vector<std::string>& ids,
                std::size_t dim, std::span<const double> query, std::size_t begin,
                std::size_t end, std::size_t k, std::vector<Hit>& out) {
    std::priority_queue<Hit, std::vector<Hit>, HitBetter> heap(HitBetter{&ids});
    for (std::size_t i = begin; i < end; ++i) {
        const float* row = data.data() + i * dim;
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += static_cast<double>(row[j]) * query[j];
        const Hit hit{s, static_cast<std::uint32_t>(i)};
        if (heap.size() < k) {
            heap.push(hit);
        } else if (HitBetter{&ids}(hit, heap.top())) {
            heap.pop();
            heap.push(hit);
        }
    }
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
}

}  // namespace

RankedList VectorStore::mips_search(std::span<const double> query, std::size_t k,
                                    std::string query_id, unsigned threads) const {
    if (k < 1) throw DataError("mips k must be >= 1");
    if (query.size() != dim_) {
        throw DataError("query vector dimension " + std::to_string(query.size()) +
                        " does not match store dimension " + std::to_string(dim_));
    }

    std::vector<Hit> candidates;
    if (threads <= 1 || size() < 2 * threads) {
        scan_block(data_, ids_, dim_, query, 0, size(), k, candidates);
    } else {
        const std::size_t chunk = (size() + threads - 1) / threads;
        std::vector<std::vector<Hit>> locals(threads);
        std::vector<std::thread> workers;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(size(), begin + chunk);
            if (begin >= end) break;
            workers.emplace_back([&, t, begin, end]() {
                scan_block(data_, ids_, dim_, query, begin, end, k, locals[t]);
            });
        }
        for (auto& w : workers) w.join();
        for (auto& local : locals) {
            candidates.insert(candidates.end(), local.begin(), local.end());
        }
    }

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(candidates.size());
    for (const auto& hit : candidates) scored.emplace_back(ids_[hit.ordinal], hit.score);
    auto list = make_ranked_list(std::move(query_id), std::move(scored));
    truncate(list, k);
    return list;
}

void VectorStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vector store snapshot: " + path);
    write_magic(out, kStoreMagic);
    write_le<std::uint32_t>(out, kStoreVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    write_le<std::uint64_t>(out, ids_.size());
    for (const float v : data_) write_le<float>(out, v);
    for (const auto& id : ids_) write_string(out, id);
    if (!out) throw DataError("write failed: " + path);
}

VectorStore VectorStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vector store snapshot: " + path);
    expect_magic(in, kStoreMagic, "vector store");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kStoreVersion) {
        throw DataError("unsupported vector store version " + std::to_string(version));
    }
    VectorStore store;
    store.dim_ = read_le<std::uint32_t>(in);
    const auto count = read_le<std::uint64_t>(in);
    store.data_.resize(count * store.dim_);
    for (auto& v : store.data_) v = read_le<float>(in);
    store.ids_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) store.ids_.push_back(read_string(in));
    return store;
}

}  // namespace mmr
