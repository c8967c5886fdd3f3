#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/dense.hpp"
#include "mmr/ranked_list.hpp"

namespace mmr {

// One training triple: a query, a passage containing one of its answers,
// and a retrieved passage that does not.
struct TrainingInstance {
    std::string query_id;
    std::string positive_id;
    std::string negative_id;
};

// How the candidate set for an instance is assembled beyond its own
// retrieved negative: nothing extra, the other instances' negatives, the
// other instances' positives, or both.
enum class NegativeSampling { RNeg, RNegIBNeg, RNegIBPos, RNegIBAll };

const char* to_string(NegativeSampling strategy);
std::optional<NegativeSampling> negative_sampling_from_string(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 4;
    double learning_rate = 0.1;
    std::size_t epochs = 2;
    NegativeSampling strategy = NegativeSampling::RNegIBAll;
    std::uint64_t seed = 0;
    std::size_t eval_every_steps = 100;
    bool use_visual = true;

    void validate() const;
};

struct BuildDataStats {
    std::size_t queries_with_instances = 0;
    std::size_t skipped_no_positive = 0;
    std::size_t skipped_no_negative = 0;
};

// Builds training triples from a sparse run. Per query: retrieved passages
// are split into positives (contain an answer) and negatives; the top_pos
// highest-ranked positives are each emitted `repeats` times, paired with
// negatives drawn uniformly without replacement (per positive, seeded).
// Queries lacking positives or negatives emit nothing. Pure function of
// (run, queries, seed).
std::vector<TrainingInstance> build_training_data(const std::vector<RankedList>& run,
                                                  const std::vector<MultiModalQuery>& queries,
                                                  const PassageMap& passages,
                                                  std::size_t top_pos, std::size_t repeats,
                                                  std::uint64_t seed,
                                                  BuildDataStats* stats = nullptr);

// Union of each query's top-N retrieved passage ids, sorted for determinism.
std::vector<std::string> build_validation_collection(const std::vector<RankedList>& run,
                                                     std::size_t top = 20);

// Candidate passage ids for instance i of the batch: its positive first,
// then the strategy's negatives in batch order. Duplicate ids stay as
// distinct slots; any negative that equals the instance's own positive by
// id is dropped.
std::vector<std::string> candidates_for(const std::vector<TrainingInstance>& batch,
                                        std::size_t i, NegativeSampling strategy);

// Gradients, same shapes as the trainable parameters.
struct ParamGrads {
    Matrix token_embeddings;
    Matrix query_text_w;
    std::vector<double> query_text_b;
    Matrix query_visual_w;
    std::vector<double> query_visual_b;
    Matrix passage_w;
    std::vector<double> passage_b;

    static ParamGrads zeros_like(const DualEncoderParams& params);
};

struct LossAndGrads {
    double loss = 0.0;
    ParamGrads grads;
};

// Softmax cross entropy over each instance's candidate logits (dot products
// of the query vector with the candidate passage vectors), averaged over
// the batch, with exact analytic gradients for every parameter.
LossAndGrads batch_loss_and_grads(const DualEncoderParams& params,
                                  const std::vector<TrainingInstance>& batch,
                                  NegativeSampling strategy, const QueryMap& queries,
                                  const PassageMap& passages, bool use_visual);

struct TrainLogRow {
    std::size_t step = 0;
    double loss = 0.0;      // mean batch loss since the previous row
    double val_mrr = 0.0;   // validation MRR@5 at this step
};

struct TrainResult {
    DualEncoderParams best_params;
    std::size_t best_step = 0;
    double best_val_mrr = 0.0;
    std::vector<TrainLogRow> log;
    std::size_t total_steps = 0;
};

// Plain SGD over seeded epoch shuffles, fixed-size batches (last short
// batch kept). Every eval_every_steps (and at the end) the validation
// collection is re-encoded, searched for the validation queries, and
// MRR@5 recorded; the returned params are the best checkpoint by that
// metric. Loss turning non-finite aborts with the step number.
TrainResult train(const TrainConfig& config, DualEncoderParams params,
                  std::vector<TrainingInstance> instances, const QueryMap& queries,
                  const PassageMap& passages, const std::vector<MultiModalQuery>& val_queries,
                  const std::vector<std::string>& val_collection_ids);

void apply_sgd_update(DualEncoderParams& params, const ParamGrads& grads, double learning_rate);

// Training instance files: JSON Lines {"qid","pos","neg"}.
void write_training_instances(const std::string& path,
                              const std::vector<TrainingInstance>& instances);
std::vector<TrainingInstance> read_training_instances(const std::string& path);

// Checkpoint snapshot: config + step + full parameter state. Parameters are
// stored as 64-bit floats so a round trip reproduces results bit for bit.
struct Checkpoint {
    DualEncoderParams params;
    TrainConfig config;
    std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const DualEncoderParams& params,
                     const TrainConfig& config, std::uint64_t step);
Checkpoint load_checkpoint(const std::string& path);

void write_metrics_log(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace mmr
