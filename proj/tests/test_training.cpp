#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "grad_check.hpp"

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"
#include "mmr/training.hpp"

using namespace mmr;

namespace {

TrainingInstance inst(std::string q, std::string pos, std::string neg) {
    return {std::move(q), std::move(pos), std::move(neg)};
}

// Toy world for gradient checks: 5 known tokens, visual dim 2, n=4.
struct ToyWorld {
    QueryMap queries;
    PassageMap passages;
    std::vector<TrainingInstance> batch;
    DualEncoderParams params;

    ToyWorld() {
        const std::vector<std::string> vocab = {"alpha", "bravo", "charlie", "delta", "echo"};
        params = DualEncoderParams::init(vocab, 3, 2, 4, 1234);

        const auto add_query = [&](std::string id, std::string question,
                                   std::vector<std::vector<double>> visual) {
            MultiModalQuery q;
            q.id = id;
            q.question = std::move(question);
            q.visual_features = std::move(visual);
            q.answers = {"unused"};
            queries.emplace(std::move(id), std::move(q));
        };
        add_query("q0", "alpha bravo", {{0.4, -0.2}});
        add_query("q1", "charlie zzz alpha", {{1.0, 0.5}, {-0.5, 0.25}});
        add_query("q2", "delta echo echo", {{0.0, 1.5}});

        const auto add_passage = [&](std::string id, std::string text) {
            passages.emplace(id, Passage{id, std::move(text)});
        };
        add_passage("pp0", "alpha charlie charlie");
        add_passage("pp1", "bravo delta");
        add_passage("pp2", "echo alpha unknowntoken");
        add_passage("pn0", "delta delta bravo");
        add_passage("pn1", "echo echo");
        add_passage("pn2", "charlie bravo alpha");

        batch = {inst("q0", "pp0", "pn0"), inst("q1", "pp1", "pn1"), inst("q2", "pp2", "pn2")};
    }
};

// Separable synthetic task: the question is one shared word, the visual
// feature identifies the target passage.
struct SeparableTask {
    QueryMap queries;
    PassageMap passages;
    std::vector<MultiModalQuery> val_queries;
    std::vector<std::string> collection_ids;
    std::vector<TrainingInstance> instances;
    std::vector<std::string> vocab;

    SeparableTask() {
        const char* answers[] = {"kade", "lomu", "nepo", "rasi"};
        const char* fillers[] = {"vu", "zo", "mi", "te"};
        vocab = {"what", "thing", "kade", "lomu", "nepo", "rasi", "vu", "zo", "mi", "te"};

        for (int k = 0; k < 4; ++k) {
            const std::string pid = "pos" + std::to_string(k);
            passages.emplace(pid,
                             Passage{pid, std::string(answers[k]) + " " + fillers[k] + " thing"});
            collection_ids.push_back(pid);
            const std::string nid = "neg" + std::to_string(k);
            passages.emplace(nid, Passage{nid, std::string(fillers[k]) + " " +
                                                   fillers[(k + 1) % 4] + " thing"});
            collection_ids.push_back(nid);
        }

        Rng rng(5);
        for (int i = 0; i < 40; ++i) {
            const int k = i % 4;
            MultiModalQuery q;
            q.id = "tq" + std::to_string(i);
            q.question = "what thing";  // identical for every query
            q.answers = {answers[k]};
            std::vector<double> feat(4, 0.0);
            feat[k] = 2.0;
            for (auto& v : feat) v += 0.05 * rng.next_normal();
            q.visual_features = {feat};
            queries.emplace(q.id, q);
            instances.push_back(inst(q.id, "pos" + std::to_string(k),
                                     "neg" + std::to_string((k + 1) % 4)));
            if (i < 8) val_queries.push_back(q);
        }
    }
};

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("candidates_for sizes and contents") {
    SUBCASE("B=1: one negative under every strategy") {
        const std::vector<TrainingInstance> batch = {inst("q0", "a", "b")};
        for (const auto s : {NegativeSampling::RNeg, NegativeSampling::RNegIBNeg,
                             NegativeSampling::RNegIBPos, NegativeSampling::RNegIBAll}) {
            const auto c = candidates_for(batch, 0, s);
            REQUIRE(c.size() == 2);
            CHECK(c[0] == "a");
            CHECK(c[1] == "b");
        }
    }
    SUBCASE("B=4 with distinct ids") {
        std::vector<TrainingInstance> batch;
        for (int i = 0; i < 4; ++i) {
            batch.push_back(inst("q" + std::to_string(i), "p" + std::to_string(i),
                                 "n" + std::to_string(i)));
        }
        CHECK(candidates_for(batch, 1, NegativeSampling::RNeg).size() == 1 + 1);
        CHECK(candidates_for(batch, 1, NegativeSampling::RNegIBNeg).size() == 1 + 4);
        CHECK(candidates_for(batch, 1, NegativeSampling::RNegIBPos).size() == 1 + 4);
        CHECK(candidates_for(batch, 1, NegativeSampling::RNegIBAll).size() == 1 + 7);

        const auto all = candidates_for(batch, 1, NegativeSampling::RNegIBAll);
        CHECK(all[0] == "p1");
        // Negatives in batch order, then other positives in batch order.
        CHECK(all[1] == "n0");
        CHECK(all[4] == "n3");
        CHECK(all[5] == "p0");
        CHECK(all[7] == "p3");
    }
    SUBCASE("B=2 IB-Pos: own negative plus the other positive") {
        const std::vector<TrainingInstance> batch = {inst("q0", "p0", "n0"),
                                                     inst("q1", "p1", "n1")};
        const auto c = candidates_for(batch, 0, NegativeSampling::RNegIBPos);
        REQUIRE(c.size() == 3);
        CHECK(c[0] == "p0");
        CHECK(c[1] == "n0");
        CHECK(c[2] == "p1");
    }
    SUBCASE("a negative matching the instance's own positive is dropped") {
        // Duplicate query in the batch: the other instance's positive is
        // this instance's positive too.
        const std::vector<TrainingInstance> batch = {inst("q0", "p0", "n0"),
                                                     inst("q0", "p0", "n1")};
        const auto c = candidates_for(batch, 0, NegativeSampling::RNegIBAll);
        // p0 (positive), n0, n1; the in-batch positive p0 is excluded.
        REQUIRE(c.size() == 3);
        CHECK(std::count(c.begin(), c.end(), "p0") == 1);
    }
    SUBCASE("duplicate ids among negatives stay as distinct slots") {
        const std::vector<TrainingInstance> batch = {inst("q0", "p0", "n0"),
                                                     inst("q1", "p1", "n0")};
        const auto c = candidates_for(batch, 0, NegativeSampling::RNegIBNeg);
        REQUIRE(c.size() == 3);
        CHECK(c[1] == "n0");
        CHECK(c[2] == "n0");
    }
}

TEST_CASE("all-zero parameters give uniform softmax loss ln(C)") {
    ToyWorld world;
    // Zero every parameter: all logits are 0.
    world.params.token_embeddings = Matrix(world.params.token_embeddings.rows, 3);
    world.params.query_text_w = Matrix(3, 4);
    world.params.query_text_b.assign(4, 0.0);
    world.params.query_visual_w = Matrix(2, 4);
    world.params.query_visual_b.assign(4, 0.0);
    world.params.passage_w = Matrix(3, 4);
    world.params.passage_b.assign(4, 0.0);

    const std::vector<TrainingInstance> single = {world.batch[0]};
    const auto rneg = batch_loss_and_grads(world.params, single, NegativeSampling::RNeg,
                                           world.queries, world.passages, true);
    CHECK(rneg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const auto iball = batch_loss_and_grads(world.params, world.batch,
                                            NegativeSampling::RNegIBAll, world.queries,
                                            world.passages, true);
    CHECK(iball.loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));  // C = 2B = 6
}

TEST_CASE("raising the positive logit strictly lowers the loss") {
    // One instance; only the positive passage contains token "alpha", and
    // the query vector is E[alpha]-aligned, so bumping that embedding
    // raises only the positive logit.
    QueryMap queries;
    PassageMap passages;
    MultiModalQuery q;
    q.id = "q";
    q.question = "alpha";
    q.answers = {"x"};
    queries.emplace("q", q);
    passages.emplace("pos", Passage{"pos", "alpha"});
    passages.emplace("neg", Passage{"neg", "bravo"});
    const std::vector<TrainingInstance> batch = {inst("q", "pos", "neg")};

    double prev = std::numeric_limits<double>::infinity();
    for (const double t : {0.0, 0.5, 1.0, 2.0}) {
        DualEncoderParams p = DualEncoderParams::init({"alpha", "bravo"}, 2, 0, 2, 0);
        p.token_embeddings = Matrix(3, 2);
        p.token_embeddings.at(p.token_row("alpha"), 0) = t;
        p.query_text_w = Matrix(2, 2);
        p.query_text_w.at(0, 0) = 1.0;
        p.query_text_w.at(1, 1) = 1.0;
        p.query_text_b.assign(2, 0.0);
        p.passage_w = p.query_text_w;
        p.passage_b.assign(2, 0.0);
        // Query vector = [t, 0]; positive logit = t^2, negative logit = 0.
        const auto lg =
            batch_loss_and_grads(p, batch, NegativeSampling::RNeg, queries, passages, false);
        CHECK(lg.loss == doctest::Approx(std::log(1.0 + std::exp(-t * t))).epsilon(1e-12));
        CHECK(lg.loss < prev);
        prev = lg.loss;
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    for (const auto strategy : {NegativeSampling::RNeg, NegativeSampling::RNegIBNeg,
                                NegativeSampling::RNegIBPos, NegativeSampling::RNegIBAll}) {
        CAPTURE(to_string(strategy));
        SUBCASE(to_string(strategy)) {
            ToyWorld world;
            const auto report = gradcheck::check_gradients(
                world.params, world.batch, strategy, world.queries, world.passages, true);
            CHECK(report.checked > 50);
            CHECK(report.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("gradients of text-only training leave the visual projection untouched") {
    ToyWorld world;
    const auto lg = batch_loss_and_grads(world.params, world.batch, NegativeSampling::RNegIBAll,
                                         world.queries, world.passages, false);
    for (const double g : lg.grads.query_visual_w.a) CHECK(g == 0.0);
    for (const double g : lg.grads.query_visual_b) CHECK(g == 0.0);

    const auto report = gradcheck::check_gradients(world.params, world.batch,
                                                   NegativeSampling::RNegIBAll, world.queries,
                                                   world.passages, false);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradients of tokens outside every candidate are exactly zero") {
    ToyWorld world;
    // "delta" appears only in q2's question and pn0/pp1; use a batch without them.
    const std::vector<TrainingInstance> batch = {inst("q0", "pp0", "pn1")};
    const auto lg = batch_loss_and_grads(world.params, batch, NegativeSampling::RNeg,
                                         world.queries, world.passages, true);
    const auto row = world.params.token_row("delta");
    for (std::size_t c = 0; c < world.params.embed_dim(); ++c) {
        CHECK(lg.grads.token_embeddings.at(row, c) == 0.0);
    }
    const auto bravo_row = world.params.token_row("bravo");
    double bravo_norm = 0.0;
    for (std::size_t c = 0; c < world.params.embed_dim(); ++c) {
        bravo_norm += std::fabs(lg.grads.token_embeddings.at(bravo_row, c));
    }
    CHECK(bravo_norm > 0.0);  // touched token has signal
}

TEST_CASE("build_training_data shapes and determinism") {
    // 12 passages, answer "ans" in the first 6.
    PassageMap passages;
    std::vector<std::pair<std::string, double>> scored;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "p" + std::to_string(i);
        passages.emplace(id, Passage{id, i < 6 ? "ans word" : "other word"});
        scored.emplace_back(id, 100.0 - i);
    }
    std::vector<MultiModalQuery> queries(1);
    queries[0].id = "q0";
    queries[0].question = "what";
    queries[0].answers = {"ans"};
    const std::vector<RankedList> run = {make_ranked_list("q0", scored)};

    SUBCASE("top 5 positives, each repeated 5 times") {
        BuildDataStats stats;
        const auto data = build_training_data(run, queries, passages, 5, 5, 7, &stats);
        CHECK(data.size() == 25);
        CHECK(stats.queries_with_instances == 1);
        std::set<std::string> positives;
        for (const auto& d : data) {
            positives.insert(d.positive_id);
            CHECK(contains_answer(passages.at(d.positive_id), queries[0].answers));
            CHECK_FALSE(contains_answer(passages.at(d.negative_id), queries[0].answers));
            CHECK(d.positive_id != d.negative_id);
        }
        CHECK(positives.size() == 5);  // p0..p4 (rank order), not p5
        CHECK(positives.count("p5") == 0);

        // Per positive, negatives are drawn without replacement.
        for (const auto& pos : positives) {
            std::set<std::string> negs;
            for (const auto& d : data) {
                if (d.positive_id == pos) negs.insert(d.negative_id);
            }
            CHECK(negs.size() == 5);
        }
    }
    SUBCASE("pure function of (run, seed)") {
        const auto a = build_training_data(run, queries, passages, 5, 5, 7, nullptr);
        const auto b = build_training_data(run, queries, passages, 5, 5, 7, nullptr);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].query_id == b[i].query_id);
            CHECK(a[i].positive_id == b[i].positive_id);
            CHECK(a[i].negative_id == b[i].negative_id);
        }
        const auto c = build_training_data(run, queries, passages, 5, 5, 8, nullptr);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            any_diff
                = any_diff || a[i].negative_id != c[i].negative_id;
        }
        CHECK(any_diff);
    }
    SUBCASE("queries without positives or negatives emit nothing") {
        std::vector<MultiModalQuery> no_pos(1);
        no_pos[0].id = "q0";
        no_pos[0].question = "what";
        no_pos[0].answers = {"zzz"};
        BuildDataStats stats;
        CHECK(build_training_data(run, no_pos, passages, 5, 5, 7, &stats).empty());
        CHECK(stats.skipped_no_positive == 1);

        std::vector<MultiModalQuery> no_neg(1);
        no_neg[0].id = "q0";
        no_neg[0].question = "what";
        no_neg[0].answers = {"word"};  // every retrieved passage contains it
        CHECK(build_training_data(run, no_neg, passages, 5, 5, 7, &stats).empty());
        CHECK(stats.skipped_no_negative == 1);
    }
}

TEST_CASE("build_validation_collection set semantics") {
    std::vector<std::pair<std::string, double>> a_scored, b_scored;
    for (int i = 0; i < 25; ++i) {
        a_scored.emplace_back("a" + std::to_string(i), 100.0 - i);
        b_scored.emplace_back("b" + std::to_string(i), 100.0 - i);
    }
    const auto run_a = make_ranked_list("qa", a_scored);
    const auto run_b = make_ranked_list("qb", b_scored);

    CHECK(build_validation_collection({run_a, run_b}, 20).size() == 40);
    CHECK(build_validation_collection({run_a, run_a}, 20).size() == 20);
    CHECK(build_validation_collection({run_a}, 100).size() == 25);
}

TEST_CASE("train: lr=0 leaves parameters unchanged") {
    SeparableTask task;
    auto params = DualEncoderParams::init(task.vocab, 8, 4, 8, 3);
    const auto before = params;
    TrainConfig config;
    config.batch_size = 4;
    config.learning_rate = 0.0;
    config.epochs = 1;
    config.eval_every_steps = 5;
    config.seed = 1;
    const auto result = train(config, params, task.instances, task.queries, task.passages,
                              task.val_queries, task.collection_ids);
    CHECK(result.best_params.token_embeddings.a == before.token_embeddings.a);
    CHECK(result.best_params.query_text_w.a == before.query_text_w.a);
    CHECK(result.best_params.query_visual_w.a == before.query_visual_w.a);
    CHECK(result.best_params.passage_w.a == before.passage_w.a);
}

TEST_CASE("train: same seed gives a bit-identical metrics log") {
    SeparableTask task;
    TrainConfig config;
    config.batch_size = 4;
    config.learning_rate = 0.1;
    config.epochs = 1;
    config.eval_every_steps = 3;
    config.seed = 42;
    const auto run_once = [&]() {
        auto params = DualEncoderParams::init(task.vocab, 8, 4, 8, config.seed);
        return train(config, params, task.instances, task.queries, task.passages,
                     task.val_queries, task.collection_ids);
    };
    const auto a = run_once();
    const auto b = run_once();
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].step == b.log[i].step);
        CHECK(a.log[i].loss == b.log[i].loss);        // bit-exact
        CHECK(a.log[i].val_mrr == b.log[i].val_mrr);  // bit-exact
    }
    CHECK(a.best_step == b.best_step);
}

TEST_CASE("train: loss decreases on a separable task") {
    SeparableTask task;
    TrainConfig config;
    config.batch_size = 4;
    config.learning_rate = 0.1;
    config.epochs = 10;  // 40 instances -> 100 steps
    config.eval_every_steps = 25;
    config.seed = 0;
    auto params = DualEncoderParams::init(task.vocab, 8, 4, 8, 0);
    const auto result = train(config, params, task.instances, task.queries, task.passages,
                              task.val_queries, task.collection_ids);
    REQUIRE(result.log.size() >= 4);
    for (std::size_t i = 1; i < 4; ++i) {
        CHECK(result.log[i].loss < result.log[i - 1].loss);
    }
    CHECK(result.best_val_mrr > 0.5);
}

TEST_CASE("train validates instances and inputs") {
    SeparableTask task;
    TrainConfig config;
    auto params = DualEncoderParams::init(task.vocab, 4, 4, 4, 0);

    CHECK_THROWS_AS(train(config, params, {}, task.queries, task.passages, task.val_queries,
                          task.collection_ids),
                    DataError);

    auto bad = task.instances;
    bad[0].positive_id = bad[0].negative_id;
    CHECK_THROWS_AS(train(config, params, bad, task.queries, task.passages, task.val_queries,
                          task.collection_ids),
                    DataError);

    auto swapped = task.instances;
    std::swap(swapped[0].positive_id, swapped[0].negative_id);
    CHECK_THROWS_AS(train(config, params, swapped, task.queries, task.passages,
                          task.val_queries, task.collection_ids),
                    DataError);
}

TEST_CASE("training instance file round trip") {
    const std::vector<TrainingInstance> instances = {inst("q1", "a", "b"), inst("q2", "c", "d")};
    const auto path = std::filesystem::temp_directory_path() / "mmr_instances.jsonl";
    write_training_instances(path.string(), instances);
    const auto loaded = read_training_instances(path.string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].query_id == "q1");
    CHECK(loaded[0].positive_id == "a");
    CHECK(loaded[1].negative_id == "d");
}

TEST_CASE("checkpoint round trip preserves parameters bit for bit") {
    SeparableTask task;
    auto params = DualEncoderParams::init(task.vocab, 6, 4, 8, 17);
    TrainConfig config;
    config.strategy = NegativeSampling::RNegIBPos;
    config.learning_rate = 0.05;
    config.use_visual = false;
    const auto path = std::filesystem::temp_directory_path() / "mmr_ckpt.bin";
    save_checkpoint(path.string(), params, config, 123);
    const auto ckpt = load_checkpoint(path.string());

    CHECK(ckpt.step == 123);
    CHECK(ckpt.config.strategy == NegativeSampling::RNegIBPos);
    CHECK(ckpt.config.learning_rate == 0.05);
    CHECK(ckpt.config.use_visual == false);
    CHECK(ckpt.params.vocab == params.vocab);
    CHECK(ckpt.params.token_embeddings.a == params.token_embeddings.a);
    CHECK(ckpt.params.query_text_w.a == params.query_text_w.a);
    CHECK(ckpt.params.query_visual_w.a == params.query_visual_w.a);
    CHECK(ckpt.params.passage_w.a == params.passage_w.a);

    // Subsequent encodings agree bitwise.
    MultiModalQuery q;
    q.id = "q";
    q.question = "what thing";
    CHECK(encode_query(ckpt.params, q, false) == encode_query(params, q, false));
}

TEST_SUITE_END();
