#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mmr {

// One unit of the retrieval collection.
struct Passage {
    std::string id;
    std::string text;
};

using PassageMap = std::unordered_map<std::string, Passage>;

// A text question plus the visual clues describing its image: detected
// object names, image captions, and optionally one feature vector per
// detected region. Ground-truth answers drive relevance judgments.
struct MultiModalQuery {
    std::string id;
    std::string question;
    std::vector<std::string> objects;
    std::vector<std::string> captions;
    std::vector<std::vector<double>> visual_features;  // empty when absent
    std::vector<std::string> answers;

    bool has_visual() const { return !visual_features.empty(); }
    std::size_t visual_dim() const {
        return visual_features.empty() ? 0 : visual_features.front().size();
    }
};

using QueryMap = std::unordered_map<std::string, MultiModalQuery>;

enum class ExpansionMode { Orig, Obj, Cap, All };

const char* to_string(ExpansionMode mode);
std::optional<ExpansionMode> expansion_mode_from_string(std::string_view name);

// Lowercased ASCII-alphanumeric tokens; any maximal run of other bytes
// separates. Deterministic and locale-independent.
std::vector<std::string> tokenize(std::string_view text);

// True iff the token sequence of some answer occurs as a contiguous
// subsequence of the passage's token sequence. Case-insensitive by virtue
// of tokenize; answers that tokenize to nothing never match.
bool contains_answer(const Passage& passage, const std::vector<std::string>& answers);
bool contains_answer_tokens(const std::vector<std::string>& passage_tokens,
                            const std::vector<std::vector<std::string>>& answer_token_seqs);

// One BM25 text query per visual clue. Obj appends each object name to the
// question, Cap each caption, All concatenates Orig + Obj + Cap. Obj/Cap
// with no clues degrades to Orig and warns on stderr; the result is never
// empty.
std::vector<std::string> expand_query(const MultiModalQuery& query, ExpansionMode mode);

// Streaming JSON Lines reader: {"id": ..., "text": ...} per line.
// Rejects malformed lines (with line number) and duplicate ids.
class PassageReader {
public:
    explicit PassageReader(const std::string& path);

    // Next passage, or nullopt at end of file.
    std::optional<Passage> next();

private:
    std::string path_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
    std::unordered_set<std::string> seen_;
};

std::vector<Passage> load_passages(const std::string& path);
PassageMap load_passage_map(const std::string& path);

// Query file: JSON Lines with id, question, objects, captions, answers and
// an optional "visual" list of equal-length feature vectors.
std::vector<MultiModalQuery> load_queries(const std::string& path);

QueryMap make_query_map(const std::vector<MultiModalQuery>& queries);
PassageMap make_passage_map(const std::vector<Passage>& passages);

void write_passages_jsonl(const std::string& path, const std::vector<Passage>& passages);
void write_queries_jsonl(const std::string& path, const std::vector<MultiModalQuery>& queries);

}  // namespace mmr
