#include "mmr/corpus.hpp"

#include <algorithm>
#include <iostream>

#include "json.hpp"

#include "mmr/errors.hpp"

namespace mmr {

namespace {

using nlohmann::json;

bool is_alnum_ascii(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char to_lower_ascii(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool all_whitespace(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    });
}

json parse_line(const std::string& path, std::size_t line_no, std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON record");
    }
    return j;
}

std::string require_string(const json& j, const char* key, const std::string& path,
                           std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": missing or non-string \"" +
                        key + "\" field");
    }
    return it->get<std::string>();
}

std::vector<std::string> optional_string_list(const json& j, const char* key,
                                              const std::string& path, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end()) return {};
    if (!it->is_array()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": \"" + key +
                        "\" must be a list of strings");
    }
    std::vector<std::string> out;
    out.reserve(it->size());
    for (const auto& e : *it) {
        if (!e.is_string()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": \"" + key +
                            "\" must be a list of strings");
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

}  // namespace

const char* to_string(ExpansionMode mode) {
    switch (mode) {
        case ExpansionMode::Orig: return "orig";
        case ExpansionMode::Obj: return "obj";
        case ExpansionMode::Cap: return "cap";
        case ExpansionMode::All: return "all";
    }
    return "?";
}

std::optional<ExpansionMode> expansion_mode_from_string(std::string_view name) {
    if (name == "orig") return ExpansionMode::Orig;
    if (name == "obj") return ExpansionMode::Obj;
    if (name == "cap") return ExpansionMode::Cap;
    if (name == "all") return ExpansionMode::All;
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (is_alnum_ascii(c)) {
            cur.push_back(to_lower_ascii(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

bool contains_answer_tokens(const std::vector<std::string>& passage_tokens,
                            const std::vector<std::vector<std::string>>& answer_token_seqs) {
    for (const auto& needle : answer_token_seqs) {
        if (needle.empty()) continue;
        if (needle.size() > passage_tokens.size()) continue;
        auto it = std::search(passage_tokens.begin(), passage_tokens.end(), needle.begin(),
                              needle.end());
        if (it != passage_tokens.end()) return true;
    }
    return false;
}

bool contains_answer(const Passage& passage, const std::vector<std::string>& answers) {
    const auto passage_tokens = tokenize(passage.text);
    std::vector<std::vector<std::string>> needles;
    needles.reserve(answers.size());
    for (const auto& a : answers) needles.push_back(tokenize(a));
    return contains_answer_tokens(passage_tokens, needles);
}

std::vector<std::string> expand_query(const MultiModalQuery& query, ExpansionMode mode) {
    const auto append_each = [&](const std::vector<std::string>& clues,
                                 std::vector<std::string>& out) {
        for (const auto& clue : clues) out.push_back(query.question + " " + clue);
    };

    std::vector<std::string> out;
    switch (mode) {
        case ExpansionMode::Orig:
            out.push_back(query.question);
            break;
        case ExpansionMode::Obj:
            if (query.objects.empty()) {
                std::cerr << "warning: query " << query.id
                          << " has no objects; obj expansion degrades to orig\n";
                out.push_back(query.question);
            } else {
                append_each(query.objects, out);
            }
            break;
        case ExpansionMode::Cap:
            if (query.captions.empty()) {
                std::cerr << "warning: query " << query.id
                          << " has no captions; cap expansion degrades to orig\n";
                out.push_back(query.question);
            } else {
                append_each(query.captions, out);
            }
            break;
        case ExpansionMode::All:
            out.push_back(query.question);
            append_each(query.objects, out);
            append_each(query.captions, out);
            break;
    }
    return out;
}

PassageReader::PassageReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open passage file: " + path);
}

std::optional<Passage> PassageReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.empty() || all_whitespace(line)) continue;
        const json j = parse_line(path_, line_no_, line);
        Passage p;
        p.id = require_string(j, "id", path_, line_no_);
        p.text = require_string(j, "text", path_, line_no_);
        if (p.id.empty()) {
            throw DataError(path_ + ":" + std::to_string(line_no_) + ": empty passage id");
        }
        if (all_whitespace(p.text)) {
            throw DataError(path_ + ":" + std::to_string(line_no_) + ": empty passage text");
        }
        if (!seen_.insert(p.id).second) {
            throw DataError(path_ + ":" + std::to_string(line_no_) + ": duplicate passage id \"" +
                            p.id + "\"");
        }
        return p;
    }
    return std::nullopt;
}

std::vector<Passage> load_passages(const std::string& path) {
    PassageReader reader(path);
    std::vector<Passage> out;
    while (auto p = reader.next()) out.push_back(std::move(*p));
    return out;
}

PassageMap load_passage_map(const std::string& path) {
    PassageReader reader(path);
    PassageMap out;
    while (auto p = reader.next()) {
        auto id = p->id;
        out.emplace(std::move(id), std::move(*p));
    }
    return out;
}

std::vector<MultiModalQuery> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open query file: " + path);

    std::vector<MultiModalQuery> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || all_whitespace(line)) continue;
        const json j = parse_line(path, line_no, line);

        MultiModalQuery q;
        q.id = require_string(j, "id", path, line_no);
        q.question = require_string(j, "question", path, line_no);
        if (q.id.empty()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": empty query id");
        }
        if (q.question.empty()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": empty question");
        }
        q.objects = optional_string_list(j, "objects", path, line_no);
        q.captions = optional_string_list(j, "captions", path, line_no);
        q.answers = optional_string_list(j, "answers", path, line_no);

        if (auto it = j.find("visual"); it != j.end() && !it->is_null()) {
            if (!it->is_array()) {
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": \"visual\" must be a list of number vectors");
            }
            for (const auto& vec : *it) {
                if (!vec.is_array() || vec.empty()) {
                    throw DataError(path + ":" + std::to_string(line_no) +
                                    ": \"visual\" must hold non-empty number vectors");
                }
                std::vector<double> v;
                v.reserve(vec.size());
                for (const auto& x : vec) {
                    if (!x.is_number()) {
                        throw DataError(path + ":" + std::to_string(line_no) +
                                        ": \"visual\" must hold number vectors");
                    }
                    v.push_back(x.get<double>());
                }
                if (!q.visual_features.empty() &&
                    v.size() != q.visual_features.front().size()) {
                    throw DataError(path + ":" + std::to_string(line_no) +
                                    ": visual feature vectors differ in length");
                }
                q.visual_features.push_back(std::move(v));
            }
        }

        if (!seen.insert(q.id).second) {
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate query id \"" +
                            q.id + "\"");
        }
        out.push_back(std::move(q));
    }
    return out;
}

QueryMap make_query_map(const std::vector<MultiModalQuery>& queries) {
    QueryMap m;
    m.reserve(queries.size());
    for (const auto& q : queries) m.emplace(q.id, q);
    return m;
}

PassageMap make_passage_map(const std::vector<Passage>& passages) {
    PassageMap m;
    m.reserve(passages.size());
    for (const auto& p : passages) {
        if (!m.emplace(p.id, p).second) {
            throw DataError("duplicate passage id \"" + p.id + "\"");
        }
    }
    return m;
}

void write_passages_jsonl(const std::string& path, const std::vector<Passage>& passages) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write passage file: " + path);
    for (const auto& p : passages) {
        json j;
        j["id"] = p.id;
        j["text"] = p.text;
        out << j.dump() << '\n';
    }
}

void write_queries_jsonl(const std::string& path, const std::vector<MultiModalQuery>& queries) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write query file: " + path);
    for (const auto& q : queries) {
        json j;
        j["id"] = q.id;
        j["question"] = q.question;
        j["objects"] = q.objects;
        j["captions"] = q.captions;
        j["answers"] = q.answers;
        if (!q.visual_features.empty()) j["visual"] = q.visual_features;
        out << j.dump() << '\n';
    }
}

}  // namespace mmr
