#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "mmr/corpus.hpp"
#include "mmr/dense.hpp"
#include "mmr/errors.hpp"
#include "mmr/eval.hpp"
#include "mmr/fusion.hpp"
#include "mmr/run_file.hpp"
#include "mmr/sparse_index.hpp"
#include "mmr/stats.hpp"
#include "mmr/synth.hpp"
#include "mmr/training.hpp"

namespace {

using namespace mmr;

const std::map<std::string, ExpansionMode> kModeNames = {
    {"orig", ExpansionMode::Orig},
    {"obj", ExpansionMode::Obj},
    {"cap", ExpansionMode::Cap},
    {"all", ExpansionMode::All},
};

const std::map<std::string, FusionKind> kFusionNames = {
    {"combmax", FusionKind::CombMax},
    {"combsum", FusionKind::CombSum},
    {"rrf", FusionKind::Rrf},
};

const std::map<std::string, NegativeSampling> kStrategyNames = {
    {"rneg", NegativeSampling::RNeg},
    {"rneg-ibneg", NegativeSampling::RNegIBNeg},
    {"rneg-ibpos", NegativeSampling::RNegIBPos},
    {"rneg-iball", NegativeSampling::RNegIBAll},
};

unsigned default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Vocabulary for encoder init: every token in the collection plus the
// question tokens, deduplicated.
std::vector<std::string> collect_tokens(const PassageMap& passages,
                                        const std::vector<const std::vector<MultiModalQuery>*>& query_sets) {
    std::set<std::string> tokens;
    for (const auto& [id, p] : passages) {
        for (auto& t : tokenize(p.text)) tokens.insert(std::move(t));
    }
    for (const auto* queries : query_sets) {
        for (const auto& q : *queries) {
            for (auto& t : tokenize(q.question)) tokens.insert(std::move(t));
        }
    }
    return {tokens.begin(), tokens.end()};
}

std::size_t detect_visual_dim(const std::vector<const std::vector<MultiModalQuery>*>& query_sets) {
    for (const auto* queries : query_sets) {
        for (const auto& q : *queries) {
            if (q.has_visual()) return q.visual_dim();
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mmr: multi-modal passage retrieval (sparse BM25 + fusion, dense dual encoder)"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value config file; dotted keys (e.g. train.lr) reach subcommands");

    unsigned threads = default_threads();
    app.add_option("--threads", threads, "Worker threads for encoding and dense search")
        ->capture_default_str();

    // ---- index-build ----
    struct {
        std::string passages, out;
    } ib;
    auto* ib_cmd = app.add_subcommand("index-build", "Build an inverted index from a passage file");
    ib_cmd->add_option("--passages", ib.passages, "Passage JSONL file")->required();
    ib_cmd->add_option("--out", ib.out, "Index snapshot output path")->required();
    ib_cmd->callback([&]() {
        PassageReader reader(ib.passages);
        const auto index = InvertedIndex::build([&]() { return reader.next(); });
        index.save(ib.out);
        std::cout << "indexed " << index.num_docs() << " passages (avg doc length "
                  << index.avg_doc_len() << ")\n";
    });

    // ---- search-sparse ----
    struct {
        std::string index, queries, out, tag = "bm25";
        ExpansionMode mode = ExpansionMode::Orig;
        FusionKind fusion = FusionKind::CombSum;
        double rrf_const = 60.0;
        std::size_t k = 100;
        double k1 = 0.9, b = 0.4;
    } ss;
    auto* ss_cmd =
        app.add_subcommand("search-sparse", "BM25 retrieval with visual-clue query expansion");
    ss_cmd->add_option("--index", ss.index, "Index snapshot")->required();
    ss_cmd->add_option("--queries", ss.queries, "Query JSONL file")->required();
    ss_cmd->add_option("--out", ss.out, "Run file output")->required();
    ss_cmd->add_option("--mode", ss.mode, "Expansion mode")
        ->transform(CLI::CheckedTransformer(kModeNames))
        ->default_str("orig");
    ss_cmd->add_option("--fusion", ss.fusion, "Fusion method for the expanded query set")
        ->transform(CLI::CheckedTransformer(kFusionNames))
        ->default_str("combsum");
    ss_cmd->add_option("--rrf-const,--const", ss.rrf_const, "RRF constant")->capture_default_str();
    ss_cmd->add_option("--k", ss.k, "Search depth per query")->capture_default_str();
    ss_cmd->add_option("--k1", ss.k1, "BM25 k1")->capture_default_str();
    ss_cmd->add_option("--b", ss.b, "BM25 b")->capture_default_str();
    ss_cmd->add_option("--tag", ss.tag, "Run tag")->capture_default_str();
    ss_cmd->callback([&]() {
        const auto index = InvertedIndex::load(ss.index);
        const auto queries = load_queries(ss.queries);
        const Bm25Params params{ss.k1, ss.b};
        const FusionMethod method{ss.fusion, ss.rrf_const};
        std::vector<RankedList> out;
        out.reserve(queries.size());
        for (const auto& q : queries) {
            std::vector<RankedList> lists;
            for (const auto& text : expand_query(q, ss.mode)) {
                lists.push_back(index.search(params, text, ss.k, q.id));
            }
            RankedList fused = fuse(lists, method);
            truncate(fused, ss.k);
            out.push_back(std::move(fused));
        }
        write_run(ss.out, out, ss.tag);
        std::cout << "wrote " << out.size() << " ranked lists to " << ss.out << "\n";
    });

    // ---- fuse ----
    struct {
        std::vector<std::string> runs;
        std::string out, tag = "fused";
        FusionKind method = FusionKind::CombSum;
        double rrf_const = 60.0;
    } fu;
    auto* fu_cmd = app.add_subcommand("fuse", "Fuse N run files into one");
    fu_cmd->add_option("runs", fu.runs, "Input run files")->required()->expected(-1);
    fu_cmd->add_option("--out", fu.out, "Fused run output")->required();
    fu_cmd->add_option("--method", fu.method, "Fusion method")
        ->transform(CLI::CheckedTransformer(kFusionNames))
        ->required();
    fu_cmd->add_option("--rrf-const,--const", fu.rrf_const, "RRF constant")->capture_default_str();
    fu_cmd->add_option("--tag", fu.tag, "Run tag")->capture_default_str();
    fu_cmd->callback([&]() {
        std::vector<std::vector<RankedList>> files;
        files.reserve(fu.runs.size());
        for (const auto& path : fu.runs) files.push_back(read_run(path));

        std::vector<std::string> qid_order;
        std::set<std::string> seen;
        for (const auto& file : files) {
            for (const auto& list : file) {
                if (seen.insert(list.query_id).second) qid_order.push_back(list.query_id);
            }
        }
        const FusionMethod method{fu.method, fu.rrf_const};
        std::vector<RankedList> out;
        out.reserve(qid_order.size());
        for (const auto& qid : qid_order) {
            std::vector<RankedList> lists;
            for (const auto& file : files) {
                for (const auto& list : file) {
                    if (list.query_id == qid) lists.push_back(list);
                }
            }
            out.push_back(fuse(lists, method));
        }
        write_run(fu.out, out, fu.tag);
        std::cout << "fused " << fu.runs.size() << " runs over " << out.size() << " queries\n";
    });

    // ---- mk-train ----
    struct {
        std::string run, queries, passages, out;
        std::size_t top_pos = 5, repeats = 5;
        std::uint64_t seed = 0;
    } mt;
    auto* mt_cmd =
        app.add_subcommand("mk-train", "Build training instances from a sparse retrieval run");
    mt_cmd->add_option("--run", mt.run, "Run file (retrieval over the training queries)")->required();
    mt_cmd->add_option("--queries", mt.queries, "Query JSONL file")->required();
    mt_cmd->add_option("--passages", mt.passages, "Passage JSONL file")->required();
    mt_cmd->add_option("--out", mt.out, "Training instance JSONL output")->required();
    mt_cmd->add_option("--top-pos", mt.top_pos, "Top positives per query")->capture_default_str();
    mt_cmd->add_option("--repeats", mt.repeats, "Repeats per positive")->capture_default_str();
    mt_cmd->add_option("--seed", mt.seed, "Negative sampling seed")->capture_default_str();
    mt_cmd->callback([&]() {
        const auto run = read_run(mt.run);
        const auto queries = load_queries(mt.queries);
        const auto passages = load_passage_map(mt.passages);
        BuildDataStats stats;
        const auto instances =
            build_training_data(run, queries, passages, mt.top_pos, mt.repeats, mt.seed, &stats);
        write_training_instances(mt.out, instances);
        std::cout << "wrote " << instances.size() << " instances from "
                  << stats.queries_with_instances << " queries\n";
        if (stats.skipped_no_positive + stats.skipped_no_negative > 0) {
            std::cerr << "skipped " << stats.skipped_no_positive << " queries without positives, "
                      << stats.skipped_no_negative << " without negatives\n";
        }
    });

    // ---- encode ----
    struct {
        std::string checkpoint, passages, out;
    } en;
    auto* en_cmd = app.add_subcommand("encode", "Encode a passage collection into a vector store");
    en_cmd->add_option("--checkpoint", en.checkpoint, "Encoder checkpoint")->required();
    en_cmd->add_option("--passages", en.passages, "Passage JSONL file")->required();
    en_cmd->add_option("--out", en.out, "Vector store output")->required();
    en_cmd->callback([&]() {
        const auto ckpt = load_checkpoint(en.checkpoint);
        const auto passages = load_passages(en.passages);
        const auto store = VectorStore::build(ckpt.params, passages, threads);
        store.save(en.out);
        std::cout << "encoded " << store.size() << " passages (n=" << store.dim() << ")\n";
    });

    // ---- search-dense ----
    struct {
        std::string checkpoint, store, queries, out, tag = "dense";
        std::size_t k = 100;
        bool use_visual = true;
    } sd;
    auto* sd_cmd = app.add_subcommand("search-dense", "Exact inner-product search over a vector store");
    sd_cmd->add_option("--checkpoint", sd.checkpoint, "Encoder checkpoint")->required();
    sd_cmd->add_option("--store", sd.store, "Vector store snapshot")->required();
    sd_cmd->add_option("--queries", sd.queries, "Query JSONL file")->required();
    sd_cmd->add_option("--out", sd.out, "Run file output")->required();
    sd_cmd->add_option("--k", sd.k, "Results per query")->capture_default_str();
    sd_cmd->add_flag("--use-visual,!--text-only", sd.use_visual,
                     "Use the visual channel of the query encoder (default on)");
    sd_cmd->add_option("--tag", sd.tag, "Run tag")->capture_default_str();
    sd_cmd->callback([&]() {
        const auto ckpt = load_checkpoint(sd.checkpoint);
        const auto store = VectorStore::load(sd.store);
        const auto queries = load_queries(sd.queries);
        std::vector<RankedList> out;
        out.reserve(queries.size());
        for (const auto& q : queries) {
            const auto qv = encode_query(ckpt.params, q, sd.use_visual);
            out.push_back(store.mips_search(qv, sd.k, q.id, threads));
        }
        write_run(sd.out, out, sd.tag);
        std::cout << "wrote " << out.size() << " ranked lists to " << sd.out << "\n";
    });

    // ---- train ----
    struct {
        std::string instances, queries, passages, val_queries, val_run, out, metrics_log;
        std::size_t val_top = 20;
        TrainConfig config;
        std::size_t n = 128, embed_dim = 64;
    } tr;
    auto* tr_cmd = app.add_subcommand("train", "Train the dual encoder");
    tr_cmd->add_option("--instances", tr.instances, "Training instance JSONL")->required();
    tr_cmd->add_option("--queries", tr.queries, "Training query JSONL")->required();
    tr_cmd->add_option("--passages", tr.passages, "Passage JSONL")->required();
    tr_cmd->add_option("--val-queries", tr.val_queries, "Validation query JSONL")->required();
    tr_cmd->add_option("--val-run", tr.val_run, "Sparse run over the validation queries")->required();
    tr_cmd->add_option("--val-top", tr.val_top, "Top passages per query for the validation collection")
        ->capture_default_str();
    tr_cmd->add_option("--out", tr.out, "Checkpoint output")->required();
    tr_cmd->add_option("--metrics-log", tr.metrics_log, "CSV metrics log output");
    tr_cmd->add_option("--batch-size", tr.config.batch_size, "Batch size")->capture_default_str();
    tr_cmd->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
    tr_cmd->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
    tr_cmd->add_option("--strategy", tr.config.strategy, "Negative sampling strategy")
        ->transform(CLI::CheckedTransformer(kStrategyNames))
        ->default_str("rneg-iball");
    tr_cmd->add_option("--seed", tr.config.seed, "Training seed")->capture_default_str();
    tr_cmd->add_option("--eval-every", tr.config.eval_every_steps, "Steps between validation evals")
        ->capture_default_str();
    tr_cmd->add_flag("--use-visual,!--text-only", tr.config.use_visual,
                     "Train the multi-modal query encoder (default on)");
    tr_cmd->add_option("--n", tr.n, "Projection size")->capture_default_str();
    tr_cmd->add_option("--embed-dim", tr.embed_dim, "Token embedding dimension")
        ->capture_default_str();
    tr_cmd->callback([&]() {
        const auto instances = read_training_instances(tr.instances);
        const auto train_queries = load_queries(tr.queries);
        const auto val_queries = load_queries(tr.val_queries);
        const auto passages = load_passage_map(tr.passages);
        const auto val_run = read_run(tr.val_run);
        const auto val_ids = build_validation_collection(val_run, tr.val_top);

        const auto tokens = collect_tokens(passages, {&train_queries, &val_queries});
        const std::size_t visual_dim =
            tr.config.use_visual ? detect_visual_dim({&train_queries, &val_queries}) : 0;
        auto params =
            DualEncoderParams::init(tokens, tr.embed_dim, visual_dim, tr.n, tr.config.seed);

        const auto queries = make_query_map(train_queries);
        const auto result =
            train(tr.config, std::move(params), instances, queries, passages, val_queries, val_ids);
        save_checkpoint(tr.out, result.best_params, tr.config, result.best_step);
        if (!tr.metrics_log.empty()) write_metrics_log(tr.metrics_log, result.log);
        std::printf("trained %zu steps; best checkpoint at step %zu with val MRR@5=%.6f\n",
                    result.total_steps, result.best_step, result.best_val_mrr);
    });

    // ---- eval ----
    struct {
        std::string run, queries, passages, per_query;
        std::size_t k = 5;
    } ev;
    auto* ev_cmd = app.add_subcommand("eval", "Score a run file with MRR@k and P@k");
    ev_cmd->add_option("--run", ev.run, "Run file")->required();
    ev_cmd->add_option("--queries", ev.queries, "Query JSONL file")->required();
    ev_cmd->add_option("--passages", ev.passages, "Passage JSONL file")->required();
    ev_cmd->add_option("--k", ev.k, "Ranking cutoff")->capture_default_str();
    ev_cmd->add_option("--per-query", ev.per_query, "Optional per-query CSV output");
    ev_cmd->callback([&]() {
        const auto run = read_run(ev.run);
        const auto queries = load_queries(ev.queries);
        const auto passages = load_passage_map(ev.passages);
        const auto result = evaluate(run, queries, passages, ev.k);
        if (!ev.per_query.empty()) {
            std::ofstream out(ev.per_query);
            if (!out) throw DataError("cannot write per-query CSV: " + ev.per_query);
            out << "query_id,mrr@" << ev.k << ",p@" << ev.k << "\n";
            char buf[64];
            for (const auto& [qid, m] : result.per_query) {
                std::snprintf(buf, sizeof buf, ",%.17g,%.17g", m.mrr, m.p);
                out << qid << buf << "\n";
            }
        }
        std::printf("MRR@%zu=%.6f P@%zu=%.6f n=%zu\n", ev.k, result.mean_mrr_at_k, ev.k,
                    result.mean_p_at_k, result.per_query.size());
    });

    // ---- significance ----
    struct {
        std::string run_a, run_b, queries, passages;
        std::size_t k = 5;
    } sg;
    auto* sg_cmd =
        app.add_subcommand("significance", "Paired t-test between two runs, per metric");
    sg_cmd->add_option("--run-a", sg.run_a, "First run file")->required();
    sg_cmd->add_option("--run-b", sg.run_b, "Second run file")->required();
    sg_cmd->add_option("--queries", sg.queries, "Query JSONL file")->required();
    sg_cmd->add_option("--passages", sg.passages, "Passage JSONL file")->required();
    sg_cmd->add_option("--k", sg.k, "Ranking cutoff")->capture_default_str();
    sg_cmd->callback([&]() {
        const auto queries = load_queries(sg.queries);
        const auto passages = load_passage_map(sg.passages);
        const auto result_a = evaluate(read_run(sg.run_a), queries, passages, sg.k);
        const auto result_b = evaluate(read_run(sg.run_b), queries, passages, sg.k);
        std::vector<double> mrr_a, mrr_b, p_a, p_b;
        for (std::size_t i = 0; i < result_a.per_query.size(); ++i) {
            mrr_a.push_back(result_a.per_query[i].second.mrr);
            mrr_b.push_back(result_b.per_query[i].second.mrr);
            p_a.push_back(result_a.per_query[i].second.p);
            p_b.push_back(result_b.per_query[i].second.p);
        }
        const auto mrr_test = paired_t_test(mrr_a, mrr_b);
        const auto p_test = paired_t_test(p_a, p_b);
        std::printf("mrr@%zu: t=%.6g p=%.6g\n", sg.k, mrr_test.t, mrr_test.p);
        std::printf("p@%zu: t=%.6g p=%.6g\n", sg.k, p_test.t, p_test.p);
    });

    // ---- synth-gen ----
    struct {
        std::uint64_t seed = 0;
        std::size_t num_passages = 2000, num_queries = 200;
        std::string out_passages, out_queries;
    } sy;
    auto* sy_cmd = app.add_subcommand("synth-gen", "Generate a synthetic multi-modal dataset");
    sy_cmd->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();
    sy_cmd->add_option("--num-passages", sy.num_passages, "Collection size (>= 10)")
        ->capture_default_str();
    sy_cmd->add_option("--num-queries", sy.num_queries, "Query count (>= 10)")
        ->capture_default_str();
    sy_cmd->add_option("--out-passages", sy.out_passages, "Passage JSONL output")->required();
    sy_cmd->add_option("--out-queries", sy.out_queries, "Query JSONL output")->required();
    sy_cmd->callback([&]() {
        const auto data = synth_gen({sy.seed, sy.num_passages, sy.num_queries});
        write_passages_jsonl(sy.out_passages, data.passages);
        write_queries_jsonl(sy.out_queries, data.queries);
        std::cout << "generated " << data.passages.size() << " passages, " << data.queries.size()
                  << " queries\n";
    });

    // ---- tune ----
    struct {
        std::string index, queries, passages;
        ExpansionMode mode = ExpansionMode::Cap;
        FusionKind fusion = FusionKind::CombSum;
        double rrf_const = 60.0;
        std::size_t depth = 100;
    } tu;
    auto* tu_cmd = app.add_subcommand("tune", "Grid-search BM25 (k1, b) on validation MRR@5");
    tu_cmd->add_option("--index", tu.index, "Index snapshot")->required();
    tu_cmd->add_option("--queries", tu.queries, "Validation query JSONL")->required();
    tu_cmd->add_option("--passages", tu.passages, "Passage JSONL")->required();
    tu_cmd->add_option("--mode", tu.mode, "Expansion mode")
        ->transform(CLI::CheckedTransformer(kModeNames))
        ->default_str("cap");
    tu_cmd->add_option("--fusion", tu.fusion, "Fusion method")
        ->transform(CLI::CheckedTransformer(kFusionNames))
        ->default_str("combsum");
    tu_cmd->add_option("--rrf-const,--const", tu.rrf_const, "RRF constant")->capture_default_str();
    tu_cmd->add_option("--depth", tu.depth, "Search depth per expanded query")
        ->capture_default_str();
    tu_cmd->callback([&]() {
        const auto index = InvertedIndex::load(tu.index);
        const auto queries = load_queries(tu.queries);
        const auto passages = load_passage_map(tu.passages);
        const FusionMethod method{tu.fusion, tu.rrf_const};
        const auto result = tune_bm25(index, queries, passages, tu.mode, method, tu.depth);
        for (const auto& cell : result.grid) {
            std::printf("k1=%.1f b=%.1f mrr@5=%.6f\n", cell.params.k1, cell.params.b, cell.mrr);
        }
        std::printf("best k1=%.1f b=%.1f mrr@5=%.6f\n", result.best.k1, result.best.b,
                    result.best_mrr);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
