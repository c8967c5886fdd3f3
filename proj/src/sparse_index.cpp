#include "mmr/sparse_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mmr/binary_io.hpp"
#include "mmr/errors.hpp"

namespace mmr {

namespace {
constexpr char kIndexMagic[9] = "MMRINDX1";
constexpr std::uint32_t kIndexVersion = 1;
}  // namespace

void Bm25Params::validate() const {
    if (!(k1 >= 0.0)) throw DataError("bm25 k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw DataError("bm25 b must be in [0, 1]");
}

InvertedIndex InvertedIndex::build(const std::function<std::optional<Passage>()>& source) {
    InvertedIndex index;
    std::uint64_t total_len = 0;

    while (auto passage = source()) {
        const auto ordinal = static_cast<std::uint32_t>(index.doc_ids_.size());
        if (!index.ord_.emplace(passage->id, ordinal).second) {
            throw DataError("duplicate passage id \"" + passage->id + "\"");
        }
        index.doc_ids_.push_back(passage->id);

        const auto tokens = tokenize(passage->text);
        index.doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();

        std::unordered_map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf) {
            index.postings_[term].push_back({ordinal, count});
        }
    }

    if (index.doc_ids_.empty()) throw DataError("empty collection");
    index.avg_len_ =
        static_cast<double>(total_len) / static_cast<double>(index.doc_ids_.size());

    // Postings arrive in ordinal order already; keep the invariant explicit.
    for (auto& [term, list] : index.postings_) {
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }
    return index;
}

InvertedIndex InvertedIndex::build(const std::vector<Passage>& passages) {
    std::size_t i = 0;
    return build([&]() -> std::optional<Passage> {
        if (i >= passages.size()) return std::nullopt;
        return passages[i++];
    });
}

std::uint32_t InvertedIndex::doc_length(const std::string& passage_id) const {
    auto it = ord_.find(passage_id);
    if (it == ord_.end()) throw DataError("unknown passage id \"" + passage_id + "\"");
    return doc_lens_[it->second];
}

std::size_t InvertedIndex::doc_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

const std::vector<InvertedIndex::Posting>* InvertedIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

double InvertedIndex::idf(std::size_t df) const {
    const double n = static_cast<double>(num_docs());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double InvertedIndex::term_contribution(const Bm25Params& params, double idf_t, std::uint32_t tf,
                                        std::uint32_t doc_len) const {
    const double tfd = static_cast<double>(tf);
    const double norm = 1.0 - params.b + params.b * static_cast<double>(doc_len) / avg_len_;
    return idf_t * tfd * (params.k1 + 1.0) / (tfd + params.k1 * norm);
}

double InvertedIndex::bm25_score(const Bm25Params& params,
                                 const std::vector<std::string>& query_tokens,
                                 const std::string& passage_id) const {
    params.validate();
    auto it = ord_.find(passage_id);
    if (it == ord_.end()) throw DataError("unknown passage id \"" + passage_id + "\"");
    const std::uint32_t ordinal = it->second;
    const std::uint32_t dl = doc_lens_[ordinal];

    double score = 0.0;
    for (const auto& token : query_tokens) {
        const auto* list = postings(token);
        if (!list) continue;
        auto pit = std::lower_bound(
            list->begin(), list->end(), ordinal,
            [](const Posting& p, std::uint32_t doc) { return p.doc < doc; });
        if (pit == list->end() || pit->doc != ordinal) continue;
        score += term_contribution(params, idf(list->size()), pit->tf, dl);
    }
    return score;
}

RankedList InvertedIndex::search(const Bm25Params& params, std::string_view query_text,
                                 std::size_t k, std::string query_id) const {
    params.validate();
    if (k < 1) throw DataError("search k must be >= 1");
    const auto tokens = tokenize(query_text);

    // Term-at-a-time accumulation: per document, contributions are added in
    // query-token order, which keeps scores independent of insertion order.
    std::vector<double> acc(num_docs(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& token : tokens) {
        const auto* list = postings(token);
        if (!list) continue;
        const double idf_t = idf(list->size());
        for (const auto& p : *list) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += term_contribution(params, idf_t, p.tf, doc_lens_[p.doc]);
        }
    }

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(touched.size());
    for (const auto doc : touched) {
        if (acc[doc] > 0.0) scored.emplace_back(doc_ids_[doc], acc[doc]);
    }
    auto list = make_ranked_list(std::move(query_id), std::move(scored));
    truncate(list, k);
    return list;
}

void InvertedIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write index snapshot: " + path);
    write_magic(out, kIndexMagic);
    write_le<std::uint32_t>(out, kIndexVersion);
    write_le<std::uint64_t>(out, doc_ids_.size());
    write_le<double>(out, avg_len_);
    for (const auto& id : doc_ids_) write_string(out, id);
    for (const auto len : doc_lens_) write_le<std::uint32_t>(out, len);

    // Terms sorted for a canonical byte layout.
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, list] : postings_) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });

    write_le<std::uint64_t>(out, terms.size());
    for (const auto* term : terms) {
        write_string(out, *term);
        const auto& list = postings_.at(*term);
        write_le<std::uint64_t>(out, list.size());
        for (const auto& p : list) {
            write_le<std::uint32_t>(out, p.doc);
            write_le<std::uint32_t>(out, p.tf);
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index snapshot: " + path);
    expect_magic(in, kIndexMagic, "index");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kIndexVersion) {
        throw DataError("unsupported index snapshot version " + std::to_string(version));
    }

    InvertedIndex index;
    const auto num_docs = read_le<std::uint64_t>(in);
    index.avg_len_ = read_le<double>(in);
    index.doc_ids_.reserve(num_docs);
    for (std::uint64_t i = 0; i < num_docs; ++i) {
        index.doc_ids_.push_back(read_string(in));
        index.ord_.emplace(index.doc_ids_.back(), static_cast<std::uint32_t>(i));
    }
    index.doc_lens_.reserve(num_docs);
    for (std::uint64_t i = 0; i < num_docs; ++i) {
        index.doc_lens_.push_back(read_le<std::uint32_t>(in));
    }
    const auto num_terms = read_le<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < num_terms; ++i) {
        std::string term = read_string(in);
        const auto len = read_le<std::uint64_t>(in);
        std::vector<Posting> list(len);
        for (auto& p : list) {
            p.doc = read_le<std::uint32_t>(in);
            p.tf = read_le<std::uint32_t>(in);
        }
        index.postings_.emplace(std::move(term), std::move(list));
    }

    // Consistency checks so a damaged snapshot fails loudly.
    std::uint64_t total_len = 0;
    for (const auto len : index.doc_lens_) total_len += len;
    const double mean = num_docs == 0
                            ? 0.0
                            : static_cast<double>(total_len) / static_cast<double>(num_docs);
    if (num_docs == 0 || std::fabs(mean - index.avg_len_) > 1e-9) {
        throw DataError("index snapshot is inconsistent: stored average document length " +
                        std::to_string(index.avg_len_) + " does not match " +
                        std::to_string(mean));
    }
    for (const auto& [term, list] : index.postings_) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].doc >= num_docs || list[i].tf == 0 ||
                (i > 0 && list[i].doc <= list[i - 1].doc)) {
                throw DataError("index snapshot is inconsistent: bad postings for term \"" +
                                term + "\"");
            }
        }
    }
    return index;
}

}  // namespace mmr
