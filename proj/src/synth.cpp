#include "mmr/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace {

constexpr std::size_t kVisualDim = 32;
constexpr double kPrototypeScale = 2.0;
constexpr double kPrototypeJitter = 0.25;
constexpr double kFeatureNoise = 0.15;

struct WordFactory {
    Rng& rng;
    std::set<std::string> used;

    explicit WordFactory(Rng& r) : rng(r) {
        for (const char* w : {"what", "is", "this", "a", "the", "with", "and", "of"}) {
            used.insert(w);
        }
    }

    std::string fresh() {
        static constexpr const char* consonants = "bdfgklmnprstvz";
        static constexpr const char* vowels = "aeiou";
        for (;;) {
            std::string w;
            const std::size_t syllables = 2 + rng.next_below(3);
            for (std::size_t s = 0; s < syllables; ++s) {
                w.push_back(consonants[rng.next_below(14)]);
                w.push_back(vowels[rng.next_below(5)]);
            }
            if (rng.next_below(2) == 0) w.push_back(consonants[rng.next_below(14)]);
            if (used.insert(w).second) return w;
        }
    }

    std::vector<std::string> batch(std::size_t count) {
        std::vector<std::string> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) out.push_back(fresh());
        return out;
    }
};

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

std::size_t clamp_size(std::size_t v, std::size_t lo, std::size_t hi) {
    return std::max(lo, std::min(hi, v));
}

}  // namespace

SynthData synth_gen(const SynthSpec& spec) {
    if (spec.num_passages < 10 || spec.num_queries < 10) {
        throw DataError("synth_gen requires at least 10 passages and 10 queries");
    }

    Rng rng(spec.seed);
    WordFactory words(rng);

    // Latent structure: K visual classes, T question templates, C classes
    // per template. Each (template, class) pair is one answerable concept.
    const std::size_t num_classes = clamp_size(spec.num_queries / 10, 4, 20);
    std::size_t num_templates = clamp_size(spec.num_queries / 20, 2, 10);
    std::size_t classes_per_template = std::min<std::size_t>(5, num_classes);
    const std::size_t concept_budget = std::max<std::size_t>(2, spec.num_passages / 2);
    if (num_templates * classes_per_template > concept_budget) {
        classes_per_template = std::max<std::size_t>(1, concept_budget / num_templates);
        num_templates = std::max<std::size_t>(1, std::min(num_templates, concept_budget));
    }
    const std::size_t num_concepts = num_templates * classes_per_template;
    const std::size_t facts_per_concept =
        clamp_size(spec.num_passages / (4 * num_concepts), 1, 3);

    // Vocabulary pools. Answers and class names stay exclusive to fact
    // passages and captions, so relevance is controlled.
    const auto class_words = words.batch(num_classes);
    const std::size_t parts_pool_size = std::max<std::size_t>(4, (3 * num_classes) / 2);
    const auto parts_pool = words.batch(parts_pool_size);
    const auto distractors = words.batch(250);

    // Each part word is shared by neighbouring classes: objects narrow the
    // class down without pinning it the way the class word does.
    std::vector<std::vector<std::string>> class_parts(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        const std::size_t base = (3 * k) / 2;
        for (std::size_t j = 0; j < 3; ++j) {
            class_parts[k].push_back(parts_pool[(base + j) % parts_pool_size]);
        }
    }

    std::vector<std::vector<double>> prototypes(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        auto& proto = prototypes[k];
        proto.resize(kVisualDim);
        for (std::size_t j = 0; j < kVisualDim; ++j) {
            proto[j] = kPrototypeJitter * rng.next_normal();
        }
        proto[k % kVisualDim] += kPrototypeScale;
    }

    struct Template {
        std::vector<std::string> words;  // 3 template-specific words
        std::string question;
        std::vector<std::size_t> classes;
    };
    std::vector<Template> templates(num_templates);
    for (std::size_t t = 0; t < num_templates; ++t) {
        auto& tpl = templates[t];
        tpl.words = words.batch(3);
        tpl.question =
            "what " + tpl.words[0] + " " + tpl.words[1] + " is this " + tpl.words[2];
        const auto picks = rng.sample_without_replacement(num_classes, classes_per_template);
        tpl.classes.assign(picks.begin(), picks.end());
    }

    struct Concept {
        std::size_t template_id;
        std::size_t class_id;
        std::string answer;
    };
    std::vector<Concept> concepts;
    concepts.reserve(num_concepts);
    for (std::size_t t = 0; t < num_templates; ++t) {
        for (const auto k : templates[t].classes) {
            concepts.push_back({t, k, words.fresh()});
        }
    }

    // Fact passages: template words + class word + parts + the answer,
    // padded with distractors. These are the only answer-bearing passages.
    std::vector<std::string> passage_texts;
    passage_texts.reserve(spec.num_passages);
    for (const auto& cpt : concepts) {
        for (std::size_t f = 0; f < facts_per_concept; ++f) {
            std::vector<std::string> body = templates[cpt.template_id].words;
            body.push_back(class_words[cpt.class_id]);
            for (const auto& part : class_parts[cpt.class_id]) body.push_back(part);
            body.push_back(cpt.answer);
            const std::size_t pad = 3 + rng.next_below(6);
            for (std::size_t d = 0; d < pad; ++d) {
                body.push_back(distractors[rng.next_below(distractors.size())]);
            }
            rng.shuffle(body);
            passage_texts.push_back(join_words(body));
        }
    }

    // Noise passages share template or part words so sparse retrieval has
    // real competition, but never answers or class words.
    while (passage_texts.size() < spec.num_passages) {
        std::vector<std::string> body;
        const double roll = rng.next_unit();
        if (roll < 0.30) {
            const auto& tpl = templates[rng.next_below(num_templates)];
            const std::size_t take = 1 + rng.next_below(2);
            for (std::size_t j = 0; j < take; ++j) body.push_back(tpl.words[j]);
        } else if (roll < 0.55) {
            const std::size_t take = 1 + rng.next_below(2);
            for (std::size_t j = 0; j < take; ++j) {
                body.push_back(parts_pool[rng.next_below(parts_pool_size)]);
            }
        }
        const std::size_t pad = 6 + rng.next_below(9);
        for (std::size_t d = 0; d < pad; ++d) {
            body.push_back(distractors[rng.next_below(distractors.size())]);
        }
        rng.shuffle(body);
        passage_texts.push_back(join_words(body));
    }

    SynthData data;
    {
        std::vector<std::size_t> order(passage_texts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        data.passages.reserve(passage_texts.size());
        char id[24];
        for (std::size_t i = 0; i < order.size(); ++i) {
            std::snprintf(id, sizeof id, "p%05zu", i);
            data.passages.push_back({id, passage_texts[order[i]]});
        }
    }

    // Queries cycle through the concepts, then get shuffled. All queries of
    // one template share the exact question text, so text alone cannot
    // separate their (different) answers.
    std::vector<std::size_t> concept_of_query(spec.num_queries);
    for (std::size_t qi = 0; qi < spec.num_queries; ++qi) {
        concept_of_query[qi] = qi % num_concepts;
    }
    rng.shuffle(concept_of_query);

    data.queries.reserve(spec.num_queries);
    char qid[24];
    for (std::size_t qi = 0; qi < spec.num_queries; ++qi) {
        const Concept& cpt = concepts[concept_of_query[qi]];
        const Template& tpl = templates[cpt.template_id];

        MultiModalQuery q;
        std::snprintf(qid, sizeof qid, "q%05zu", qi);
        q.id = qid;
        q.question = tpl.question;
        q.answers = {cpt.answer};

        q.objects = class_parts[cpt.class_id];
        rng.shuffle(q.objects);

        const auto& parts = class_parts[cpt.class_id];
        const auto& cls = class_words[cpt.class_id];
        std::vector<std::size_t> part_order = rng.sample_without_replacement(parts.size(), 3);
        q.captions.push_back("a " + cls + " with " + parts[part_order[0]] + " and " +
                             parts[part_order[1]]);
        q.captions.push_back("the " + cls + " and the " + parts[part_order[2]]);

        const std::size_t num_regions = 2 + rng.next_below(3);
        const auto& proto = prototypes[cpt.class_id];
        for (std::size_t r = 0; r < num_regions; ++r) {
            std::vector<double> v(kVisualDim);
            for (std::size_t j = 0; j < kVisualDim; ++j) {
                v[j] = proto[j] + kFeatureNoise * rng.next_normal();
            }
            q.visual_features.push_back(std::move(v));
        }
        data.queries.push_back(std::move(q));
    }

    return data;
}

}  // namespace mmr
