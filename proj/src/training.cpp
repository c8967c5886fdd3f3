#include "mmr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "mmr/binary_io.hpp"
#include "mmr/errors.hpp"
#include "mmr/eval.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace detail {
std::vector<double> mean_embedding(const DualEncoderParams& params,
                                   const std::vector<std::string>& tokens);
std::vector<std::string> passage_tokens(const Passage& passage);
std::vector<double> mean_visual(const MultiModalQuery& query);
}  // namespace detail

namespace {

constexpr char kCheckpointMagic[9] = "MMRCKPT1";
constexpr std::uint32_t kCheckpointVersion = 1;

const MultiModalQuery& query_or_throw(const QueryMap& queries, const std::string& id) {
    auto it = queries.find(id);
    if (it == queries.end()) throw DataError("unknown query id \"" + id + "\"");
    return it->second;
}

const Passage& passage_or_throw(const PassageMap& passages, const std::string& id) {
    auto it = passages.find(id);
    if (it == passages.end()) throw DataError("unknown passage id \"" + id + "\"");
    return it->second;
}

// dx = W . dout  (W: rows x cols, dout: cols, dx: rows)
void backprop_projection(const Matrix& w, const std::vector<double>& dout,
                         std::vector<double>& dx) {
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* wrow = w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) s += wrow[j] * dout[j];
        dx[i] += s;
    }
}

// dW += x (outer) dout
void accumulate_outer(Matrix& dw, const std::vector<double>& x,
                      const std::vector<double>& dout) {
    for (std::size_t i = 0; i < dw.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* drow = dw.row(i);
        for (std::size_t j = 0; j < dw.cols; ++j) drow[j] += xi * dout[j];
    }
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double scale) {
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += scale * v[j];
}

// Tokens, bag mean and encoded vector for one passage, cached per batch
// since in-batch strategies reuse candidates across instances.
struct EncodedPassage {
    std::vector<std::string> tokens;
    std::vector<double> x;  // mean embedding
    std::vector<double> e;  // projected representation
};

}  // namespace

const char* to_string(NegativeSampling strategy) {
    switch (strategy) {
        case NegativeSampling::RNeg: return "rneg";
        case NegativeSampling::RNegIBNeg: return "rneg-ibneg";
        case NegativeSampling::RNegIBPos: return "rneg-ibpos";
        case NegativeSampling::RNegIBAll: return "rneg-iball";
    }
    return "?";
}

std::optional<NegativeSampling> negative_sampling_from_string(std::string_view name) {
    if (name == "rneg") return NegativeSampling::RNeg;
    if (name == "rneg-ibneg") return NegativeSampling::RNegIBNeg;
    if (name == "rneg-ibpos") return NegativeSampling::RNegIBPos;
    if (name == "rneg-iball") return NegativeSampling::RNegIBAll;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (eval_every_steps < 1) throw DataError("eval_every_steps must be >= 1");
    // learning_rate 0 is allowed: it makes the update a no-op, which is
    // useful for dry runs.
    if (!(learning_rate >= 0.0)) throw DataError("learning_rate must be >= 0");
}

std::vector<TrainingInstance> build_training_data(const std::vector<RankedList>& run,
                                                  const std::vector<MultiModalQuery>& queries,
                                                  const PassageMap& passages,
                                                  std::size_t top_pos, std::size_t repeats,
                                                  std::uint64_t seed, BuildDataStats* stats) {
    std::unordered_map<std::string, const RankedList*> by_qid;
    by_qid.reserve(run.size());
    for (const auto& list : run) by_qid.emplace(list.query_id, &list);

    BuildDataStats local;
    Rng rng(seed);
    std::vector<TrainingInstance> instances;

    for (const auto& q : queries) {
        auto it = by_qid.find(q.id);
        if (it == by_qid.end() || it->second->entries.empty()) {
            ++local.skipped_no_positive;
            continue;
        }
        if (q.answers.empty()) {
            throw DataError("query \"" + q.id + "\" has no answers; cannot build instances");
        }

        std::vector<std::vector<std::string>> needles;
        needles.reserve(q.answers.size());
        for (const auto& a : q.answers) needles.push_back(tokenize(a));

        std::vector<std::string> positives;
        std::vector<std::string> negatives;
        for (const auto& e : it->second->entries) {
            const Passage& p = passage_or_throw(passages, e.passage_id);
            if (contains_answer_tokens(tokenize(p.text), needles)) {
                positives.push_back(e.passage_id);
            } else {
                negatives.push_back(e.passage_id);
            }
        }
        if (positives.empty()) {
            ++local.skipped_no_positive;
            continue;
        }
        if (negatives.empty()) {
            ++local.skipped_no_negative;
            continue;
        }
        ++local.queries_with_instances;

        const std::size_t take = std::min(top_pos, positives.size());
        for (std::size_t pi = 0; pi < take; ++pi) {
            const auto draws =
                rng.sample_without_replacement(negatives.size(), std::min(repeats, negatives.size()));
            for (const auto d : draws) {
                instances.push_back({q.id, positives[pi], negatives[d]});
            }
        }
    }

    if (stats) *stats = local;
    return instances;
}

std::vector<std::string> build_validation_collection(const std::vector<RankedList>& run,
                                                     std::size_t top) {
    std::set<std::string> ids;
    for (const auto& list : run) {
        const std::size_t limit = std::min(top, list.entries.size());
        for (std::size_t i = 0; i < limit; ++i) ids.insert(list.entries[i].passage_id);
    }
    return {ids.begin(), ids.end()};
}

std::vector<std::string> candidates_for(const std::vector<TrainingInstance>& batch,
                                        std::size_t i, NegativeSampling strategy) {
    if (i >= batch.size()) throw DataError("candidates_for: index out of range");
    const TrainingInstance& inst = batch[i];

    std::vector<std::string> out;
    out.push_back(inst.positive_id);
    const auto push_negative = [&](const std::string& id) {
        if (id != inst.positive_id) out.push_back(id);
    };

    switch (strategy) {
        case NegativeSampling::RNeg:
            push_negative(inst.negative_id);
            break;
        case NegativeSampling::RNegIBNeg:
            for (const auto& other : batch) push_negative(other.negative_id);
            break;
        case NegativeSampling::RNegIBPos:
            push_negative(inst.negative_id);
            for (std::size_t j = 0; j < batch.size(); ++j) {
                if (j != i) push_negative(batch[j].positive_id);
            }
            break;
        case NegativeSampling::RNegIBAll:
            for (const auto& other : batch) push_negative(other.negative_id);
            for (std::size_t j = 0; j < batch.size(); ++j) {
                if (j != i) push_negative(batch[j].positive_id);
            }
            break;
    }
    return out;
}

ParamGrads ParamGrads::zeros_like(const DualEncoderParams& params) {
    ParamGrads g;
    g.token_embeddings = Matrix(params.token_embeddings.rows, params.token_embeddings.cols);
    g.query_text_w = Matrix(params.query_text_w.rows, params.query_text_w.cols);
    g.query_text_b.assign(params.query_text_b.size(), 0.0);
    g.query_visual_w = Matrix(params.query_visual_w.rows, params.query_visual_w.cols);
    g.query_visual_b.assign(params.query_visual_b.size(), 0.0);
    g.passage_w = Matrix(params.passage_w.rows, params.passage_w.cols);
    g.passage_b.assign(params.passage_b.size(), 0.0);
    return g;
}

LossAndGrads batch_loss_and_grads(const DualEncoderParams& params,
                                  const std::vector<TrainingInstance>& batch,
                                  NegativeSampling strategy, const QueryMap& queries,
                                  const PassageMap& passages, bool use_visual) {
    if (batch.empty()) throw DataError("empty batch");
    const std::size_t n = params.n();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    LossAndGrads result;
    result.grads = ParamGrads::zeros_like(params);

    std::unordered_map<std::string, EncodedPassage> cache;
    const auto encoded = [&](const std::string& pid) -> const EncodedPassage& {
        auto it = cache.find(pid);
        if (it != cache.end()) return it->second;
        const Passage& p = passage_or_throw(passages, pid);
        EncodedPassage ep;
        ep.tokens = detail::passage_tokens(p);
        ep.x = detail::mean_embedding(params, ep.tokens);
        ep.e = params.passage_b;
        for (std::size_t r = 0; r < params.passage_w.rows; ++r) {
            const double xr = ep.x[r];
            if (xr == 0.0) continue;
            const double* wrow = params.passage_w.row(r);
            for (std::size_t c = 0; c < n; ++c) ep.e[c] += xr * wrow[c];
        }
        return cache.emplace(pid, std::move(ep)).first->second;
    };

    double total_loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TrainingInstance& inst = batch[i];
        const MultiModalQuery& query = query_or_throw(queries, inst.query_id);

        // Query tower forward.
        const auto q_tokens = tokenize(query.question);
        const auto x_q = detail::mean_embedding(params, q_tokens);
        std::vector<double> q = params.query_text_b;
        for (std::size_t r = 0; r < params.query_text_w.rows; ++r) {
            const double xr = x_q[r];
            if (xr == 0.0) continue;
            const double* wrow = params.query_text_w.row(r);
            for (std::size_t c = 0; c < n; ++c) q[c] += xr * wrow[c];
        }
        const bool visual_active = use_visual && params.has_visual() && query.has_visual();
        std::vector<double> x_v;
        if (visual_active) {
            if (query.visual_dim() != params.visual_dim()) {
                throw DataError("query " + query.id + " visual dimension mismatch");
            }
            x_v = detail::mean_visual(query);
            for (std::size_t c = 0; c < n; ++c) q[c] += params.query_visual_b[c];
            for (std::size_t r = 0; r < params.query_visual_w.rows; ++r) {
                const double xr = x_v[r];
                if (xr == 0.0) continue;
                const double* wrow = params.query_visual_w.row(r);
                for (std::size_t c = 0; c < n; ++c) q[c] += xr * wrow[c];
            }
        }

        // Candidate logits.
        const auto candidates = candidates_for(batch, i, strategy);
        std::vector<double> logits(candidates.size());
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            const auto& ep = encoded(candidates[j]);
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += q[c] * ep.e[c];
            logits[j] = s;
        }

        // Stable log-softmax; the positive occupies slot 0.
        const double max_logit = *std::max_element(logits.begin(), logits.end());
        double sum_exp = 0.0;
        for (const double l : logits) sum_exp += std::exp(l - max_logit);
        const double lse = max_logit + std::log(sum_exp);
        const double loss_i = lse - logits[0];
        if (!std::isfinite(loss_i)) {
            throw NumericError("non-finite loss for instance (query " + inst.query_id +
                               ", positive " + inst.positive_id + ")");
        }
        total_loss += loss_i;

        // Backward. d loss_i / d logit_j = softmax_j - [j == 0]; the 1/B of
        // the batch mean is folded in here.
        std::vector<double> dq(n, 0.0);
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            const double softmax_j = std::exp(logits[j] - lse);
            const double g = (softmax_j - (j == 0 ? 1.0 : 0.0)) * inv_batch;
            if (g == 0.0) continue;
            const auto& ep = encoded(candidates[j]);

            // Passage tower: e_j = passage_b + x_j . W_p
            add_scaled(result.grads.passage_b, q, g);
            std::vector<double> de(n);
            for (std::size_t c = 0; c < n; ++c) de[c] = g * q[c];
            accumulate_outer(result.grads.passage_w, ep.x, de);
            if (!ep.tokens.empty()) {
                std::vector<double> dx(params.embed_dim(), 0.0);
                backprop_projection(params.passage_w, de, dx);
                const double inv_len = 1.0 / static_cast<double>(ep.tokens.size());
                for (const auto& t : ep.tokens) {
                    double* erow = result.grads.token_embeddings.row(params.token_row(t));
                    for (std::size_t r = 0; r < dx.size(); ++r) erow[r] += dx[r] * inv_len;
                }
            }

            add_scaled(dq, ep.e, g);
        }

        // Query tower.
        add_scaled(result.grads.query_text_b, dq, 1.0);
        accumulate_outer(result.grads.query_text_w, x_q, dq);
        if (!q_tokens.empty()) {
            std::vector<double> dx(params.embed_dim(), 0.0);
            backprop_projection(params.query_text_w, dq, dx);
            const double inv_len = 1.0 / static_cast<double>(q_tokens.size());
            for (const auto& t : q_tokens) {
                double* erow = result.grads.token_embeddings.row(params.token_row(t));
                for (std::size_t r = 0; r < dx.size(); ++r) erow[r] += dx[r] * inv_len;
            }
        }
        if (visual_active) {
            add_scaled(result.grads.query_visual_b, dq, 1.0);
            accumulate_outer(result.grads.query_visual_w, x_v, dq);
        }
    }

    result.loss = total_loss * inv_batch;
    if (!std::isfinite(result.loss)) throw NumericError("non-finite batch loss");
    return result;
}

void apply_sgd_update(DualEncoderParams& params, const ParamGrads& grads, double learning_rate) {
    const auto update_matrix = [learning_rate](Matrix& m, const Matrix& g) {
        for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] -= learning_rate * g.a[i];
    };
    const auto update_vector = [learning_rate](std::vector<double>& v,
                                               const std::vector<double>& g) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * g[i];
    };
    update_matrix(params.token_embeddings, grads.token_embeddings);
    update_matrix(params.query_text_w, grads.query_text_w);
    update_vector(params.query_text_b, grads.query_text_b);
    update_matrix(params.query_visual_w, grads.query_visual_w);
    update_vector(params.query_visual_b, grads.query_visual_b);
    update_matrix(params.passage_w, grads.passage_w);
    update_vector(params.passage_b, grads.passage_b);
}

TrainResult train(const TrainConfig& config, DualEncoderParams params,
                  std::vector<TrainingInstance> instances, const QueryMap& queries,
                  const PassageMap& passages, const std::vector<MultiModalQuery>& val_queries,
                  const std::vector<std::string>& val_collection_ids) {
    config.validate();
    params.check_finite();
    if (instances.empty()) throw DataError("no training instances");

    // Validate the instance invariants up front.
    for (const auto& inst : instances) {
        if (inst.positive_id == inst.negative_id) {
            throw DataError("instance for query \"" + inst.query_id +
                            "\" has identical positive and negative");
        }
        const auto& q = query_or_throw(queries, inst.query_id);
        if (!contains_answer(passage_or_throw(passages, inst.positive_id), q.answers)) {
            throw DataError("positive \"" + inst.positive_id + "\" lacks every answer of query \"" +
                            inst.query_id + "\"");
        }
        if (contains_answer(passage_or_throw(passages, inst.negative_id), q.answers)) {
            throw DataError("negative \"" + inst.negative_id + "\" contains an answer of query \"" +
                            inst.query_id + "\"");
        }
    }

    std::vector<Passage> val_passages;
    val_passages.reserve(val_collection_ids.size());
    for (const auto& id : val_collection_ids) val_passages.push_back(passage_or_throw(passages, id));

    const auto validation_mrr = [&](const DualEncoderParams& p) {
        const VectorStore store = VectorStore::build(p, val_passages);
        double sum = 0.0;
        for (const auto& q : val_queries) {
            const auto qv = encode_query(p, q, config.use_visual);
            const RankedList list = store.mips_search(qv, 5, q.id);
            sum += mrr_at_k(judge(list, q, passages), 5);
        }
        return val_queries.empty() ? 0.0 : sum / static_cast<double>(val_queries.size());
    };

    TrainResult result;
    result.total_steps =
        config.epochs * ((instances.size() + config.batch_size - 1) / config.batch_size);

    Rng rng(config.seed);
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double window_loss = 0.0;
    std::size_t window_count = 0;
    std::size_t step = 0;
    double best_mrr = -1.0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<TrainingInstance> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(instances[order[i]]);

            LossAndGrads lg;
            try {
                lg = batch_loss_and_grads(params, batch, config.strategy, queries, passages,
                                          config.use_visual);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at step " + std::to_string(step + 1) +
                                   ": " + e.what());
            }
            apply_sgd_update(params, lg.grads, config.learning_rate);
            ++step;
            window_loss += lg.loss;
            ++window_count;

            if (step % config.eval_every_steps == 0 || step == result.total_steps) {
                const double mrr = validation_mrr(params);
                result.log.push_back({step, window_loss / static_cast<double>(window_count), mrr});
                window_loss = 0.0;
                window_count = 0;
                if (mrr > best_mrr) {
                    best_mrr = mrr;
                    result.best_params = params;
                    result.best_step = step;
                }
            }
        }
    }

    result.best_val_mrr = best_mrr;
    return result;
}

void write_training_instances(const std::string& path,
                              const std::vector<TrainingInstance>& instances) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write training instances: " + path);
    for (const auto& inst : instances) {
        nlohmann::json j;
        j["qid"] = inst.query_id;
        j["pos"] = inst.positive_id;
        j["neg"] = inst.negative_id;
        out << j.dump() << '\n';
    }
}

std::vector<TrainingInstance> read_training_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open training instances: " + path);
    std::vector<TrainingInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("qid") || !j.contains("pos") ||
            !j.contains("neg")) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": malformed training instance");
        }
        out.push_back({j.at("qid").get<std::string>(), j.at("pos").get<std::string>(),
                       j.at("neg").get<std::string>()});
    }
    return out;
}

namespace {

void write_matrix(std::ostream& out, const Matrix& m) {
    write_le<std::uint64_t>(out, m.rows);
    write_le<std::uint64_t>(out, m.cols);
    for (const double v : m.a) write_le<double>(out, v);
}

Matrix read_matrix(std::istream& in) {
    const auto rows = read_le<std::uint64_t>(in);
    const auto cols = read_le<std::uint64_t>(in);
    Matrix m(rows, cols);
    for (auto& v : m.a) v = read_le<double>(in);
    return m;
}

void write_dvector(std::ostream& out, const std::vector<double>& v) {
    write_le<std::uint64_t>(out, v.size());
    for (const double x : v) write_le<double>(out, x);
}

std::vector<double> read_dvector(std::istream& in) {
    const auto size = read_le<std::uint64_t>(in);
    std::vector<double> v(size);
    for (auto& x : v) x = read_le<double>(in);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const DualEncoderParams& params,
                     const TrainConfig& config, std::uint64_t step) {
    params.check_finite();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    write_magic(out, kCheckpointMagic);
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint64_t>(out, step);
    write_le<std::uint64_t>(out, config.batch_size);
    write_le<double>(out, config.learning_rate);
    write_le<std::uint64_t>(out, config.epochs);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(config.strategy));
    write_le<std::uint64_t>(out, config.seed);
    write_le<std::uint64_t>(out, config.eval_every_steps);
    write_le<std::uint8_t>(out, config.use_visual ? 1 : 0);

    write_le<std::uint64_t>(out, params.vocab.size());
    for (const auto& token : params.vocab) write_string(out, token);
    write_matrix(out, params.token_embeddings);
    write_matrix(out, params.query_text_w);
    write_dvector(out, params.query_text_b);
    write_matrix(out, params.query_visual_w);
    write_dvector(out, params.query_visual_b);
    write_matrix(out, params.passage_w);
    write_dvector(out, params.passage_b);
    if (!out) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    expect_magic(in, kCheckpointMagic, "checkpoint");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }

    Checkpoint ckpt;
    ckpt.step = read_le<std::uint64_t>(in);
    ckpt.config.batch_size = read_le<std::uint64_t>(in);
    ckpt.config.learning_rate = read_le<double>(in);
    ckpt.config.epochs = read_le<std::uint64_t>(in);
    const auto strategy = read_le<std::uint8_t>(in);
    if (strategy > static_cast<std::uint8_t>(NegativeSampling::RNegIBAll)) {
        throw DataError("checkpoint has unknown negative-sampling strategy");
    }
    ckpt.config.strategy = static_cast<NegativeSampling>(strategy);
    ckpt.config.seed = read_le<std::uint64_t>(in);
    ckpt.config.eval_every_steps = read_le<std::uint64_t>(in);
    ckpt.config.use_visual = read_le<std::uint8_t>(in) != 0;

    const auto vocab_size = read_le<std::uint64_t>(in);
    ckpt.params.vocab.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) ckpt.params.vocab.push_back(read_string(in));
    ckpt.params.vocab_index.reserve(vocab_size);
    for (std::uint32_t i = 0; i < ckpt.params.vocab.size(); ++i) {
        ckpt.params.vocab_index.emplace(ckpt.params.vocab[i], i);
    }
    ckpt.params.token_embeddings = read_matrix(in);
    ckpt.params.query_text_w = read_matrix(in);
    ckpt.params.query_text_b = read_dvector(in);
    ckpt.params.query_visual_w = read_matrix(in);
    ckpt.params.query_visual_b = read_dvector(in);
    ckpt.params.passage_w = read_matrix(in);
    ckpt.params.passage_b = read_dvector(in);
    ckpt.params.check_finite();
    return ckpt;
}

void write_metrics_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics log: " + path);
    out << "step,loss,val_mrr@5\n";
    char buf[64];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", row.step, row.loss, row.val_mrr);
        out << buf << '\n';
    }
}

}  // namespace mmr
