#pragma once

#include <cstdint>
#include <vector>

#include "mmr/corpus.hpp"

namespace mmr {

// Synthetic multi-modal retrieval task. Questions are deliberately
// ambiguous: each question template is shared by several latent visual
// classes with different answers, so the text alone cannot identify the
// answer. Captions verbalize the class, objects name its parts (each part
// word is shared across classes), and visual features are noisy copies of
// a per-class prototype vector. Every query has at least one passage
// containing its answer. Generation is a pure function of (seed, sizes).
struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t num_passages = 2000;
    std::size_t num_queries = 200;
};

struct SynthData {
    std::vector<Passage> passages;
    std::vector<MultiModalQuery> queries;
};

SynthData synth_gen(const SynthSpec& spec);

}  // namespace mmr
