#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#include "mmr/corpus.hpp"
#include "mmr/eval.hpp"
#include "mmr/fusion.hpp"
#include "mmr/run_file.hpp"
#include "mmr/sparse_index.hpp"
#include "mmr/synth.hpp"

using namespace mmr;

namespace {

namespace fs = std::filesystem;

std::string mmr_bin() {
    const char* bin = std::getenv("MMR_BIN");
    return bin ? bin : "";
}

int run_cli(const std::string& args) {
    const std::string cmd = mmr_bin() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / "mmr_pipeline_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

void check_runs_equal(const std::vector<RankedList>& a, const std::vector<RankedList>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].query_id == b[i].query_id);
        REQUIRE(a[i].entries.size() == b[i].entries.size());
        for (std::size_t j = 0; j < a[i].entries.size(); ++j) {
            CHECK(a[i].entries[j].passage_id == b[i].entries[j].passage_id);
            CHECK(a[i].entries[j].score == b[i].entries[j].score);  // bit-exact
            CHECK(a[i].entries[j].rank == b[i].entries[j].rank);
        }
    }
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("run file round trip is exact") {
    Workspace ws;
    const auto data = synth_gen({5, 200, 20});
    const auto index = InvertedIndex::build(data.passages);
    std::vector<RankedList> run;
    for (const auto& q : data.queries) {
        run.push_back(index.search({0.9, 0.4}, q.question, 50, q.id));
    }
    write_run(ws.path("roundtrip.run"), run, "tag");
    const auto loaded = read_run(ws.path("roundtrip.run"));
    check_runs_equal(run, loaded);
}

TEST_CASE("file-composed pipeline equals in-process composition") {
    const std::string bin = mmr_bin();
    if (bin.empty()) {
        MESSAGE("MMR_BIN not set; skipping CLI pipeline test");
        return;
    }
    Workspace ws;
    const SynthSpec spec{7, 300, 24};
    const auto data = synth_gen(spec);
    write_passages_jsonl(ws.path("passages.jsonl"), data.passages);
    write_queries_jsonl(ws.path("queries.jsonl"), data.queries);

    // In-process: index, expand+search+fuse per query, evaluate.
    const auto index = InvertedIndex::build(data.passages);
    const Bm25Params params{0.9, 0.4};
    std::vector<RankedList> cap_run, orig_run;
    for (const auto& q : data.queries) {
        std::vector<RankedList> lists;
        for (const auto& text : expand_query(q, ExpansionMode::Cap)) {
            lists.push_back(index.search(params, text, 50, q.id));
        }
        auto fused = fuse(lists, FusionMethod::comb_sum());
        truncate(fused, 50);
        cap_run.push_back(std::move(fused));
        orig_run.push_back(index.search(params, q.question, 50, q.id));
    }

    // Via CLI and files.
    REQUIRE(run_cli("index-build --passages " + ws.path("passages.jsonl") + " --out " +
                    ws.path("index.bin")) == 0);
    REQUIRE(run_cli("search-sparse --index " + ws.path("index.bin") + " --queries " +
                    ws.path("queries.jsonl") + " --out " + ws.path("cap.run") +
                    " --mode cap --fusion combsum --k 50") == 0);
    REQUIRE(run_cli("search-sparse --index " + ws.path("index.bin") + " --queries " +
                    ws.path("queries.jsonl") + " --out " + ws.path("orig.run") +
                    " --mode orig --fusion combsum --k 50") == 0);
    check_runs_equal(cap_run, read_run(ws.path("cap.run")));
    check_runs_equal(orig_run, read_run(ws.path("orig.run")));

    // Cross-run fusion through the fuse subcommand vs in-process.
    REQUIRE(run_cli("fuse " + ws.path("cap.run") + " " + ws.path("orig.run") +
                    " --method rrf --rrf-const 60 --out " + ws.path("fused.run")) == 0);
    std::vector<RankedList> fused_inproc;
    for (std::size_t i = 0; i < cap_run.size(); ++i) {
        fused_inproc.push_back(rrf({cap_run[i], orig_run[i]}, 60.0));
    }
    check_runs_equal(fused_inproc, read_run(ws.path("fused.run")));
}

TEST_CASE("cli exit codes") {
    const std::string bin = mmr_bin();
    if (bin.empty()) {
        MESSAGE("MMR_BIN not set; skipping CLI exit code test");
        return;
    }
    Workspace ws;
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("search-sparse --help") == 0);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("search-sparse --fusion maxx --index x --queries y --out z") == 1);
    CHECK(run_cli("index-build --passages " + ws.path("missing.jsonl") + " --out " +
                  ws.path("index.bin")) == 2);
    CHECK(run_cli("synth-gen --num-passages 5 --num-queries 5 --out-passages " +
                  ws.path("p.jsonl") + " --out-queries " + ws.path("q.jsonl")) == 2);

    // Unknown flag on a subcommand is a usage error.
    CHECK(run_cli("synth-gen --zzz 1 --out-passages " + ws.path("p.jsonl") +
                  " --out-queries " + ws.path("q.jsonl")) == 1);
}

TEST_CASE("config file values apply, with flags taking precedence") {
    const std::string bin = mmr_bin();
    if (bin.empty()) {
        MESSAGE("MMR_BIN not set; skipping config precedence test");
        return;
    }
    Workspace ws;
    const auto data = synth_gen({13, 150, 12});
    write_passages_jsonl(ws.path("passages.jsonl"), data.passages);
    write_queries_jsonl(ws.path("queries.jsonl"), data.queries);
    REQUIRE(run_cli("index-build --passages " + ws.path("passages.jsonl") + " --out " +
                    ws.path("index.bin")) == 0);
    {
        std::ofstream conf(ws.path("mmr.conf"));
        conf << "search-sparse.k1=1.3\nsearch-sparse.b=0.6\n";
    }
    const std::string base = "search-sparse --index " + ws.path("index.bin") + " --queries " +
                             ws.path("queries.jsonl") + " --mode orig --k 10";
    REQUIRE(run_cli("--config " + ws.path("mmr.conf") + " " + base + " --out " +
                    ws.path("from_conf.run")) == 0);
    REQUIRE(run_cli(base + " --k1 1.3 --b 0.6 --out " + ws.path("from_flags.run")) == 0);
    check_runs_equal(read_run(ws.path("from_conf.run")), read_run(ws.path("from_flags.run")));

    // A flag on the command line overrides the config value.
    REQUIRE(run_cli("--config " + ws.path("mmr.conf") + " " + base + " --k1 0.5 --out " +
                    ws.path("override.run")) == 0);
    REQUIRE(run_cli(base + " --k1 0.5 --b 0.6 --out " + ws.path("override_flags.run")) == 0);
    check_runs_equal(read_run(ws.path("override.run")), read_run(ws.path("override_flags.run")));
}

TEST_CASE("eval and significance CLIs emit their summary lines") {
    const std::string bin = mmr_bin();
    if (bin.empty()) {
        MESSAGE("MMR_BIN not set; skipping CLI output test");
        return;
    }
    Workspace ws;
    const auto data = synth_gen({11, 200, 16});
    write_passages_jsonl(ws.path("passages.jsonl"), data.passages);
    write_queries_jsonl(ws.path("queries.jsonl"), data.queries);
    REQUIRE(run_cli("index-build --passages " + ws.path("passages.jsonl") + " --out " +
                    ws.path("index.bin")) == 0);
    REQUIRE(run_cli("search-sparse --index " + ws.path("index.bin") + " --queries " +
                    ws.path("queries.jsonl") + " --out " + ws.path("cap.run") +
                    " --mode cap --fusion combsum --k 20") == 0);
    REQUIRE(run_cli("search-sparse --index " + ws.path("index.bin") + " --queries " +
                    ws.path("queries.jsonl") + " --out " + ws.path("orig.run") +
                    " --mode orig --k 20") == 0);

    const std::string eval_cmd = mmr_bin() + " eval --run " + ws.path("cap.run") +
                                 " --queries " + ws.path("queries.jsonl") + " --passages " +
                                 ws.path("passages.jsonl") + " --per-query " +
                                 ws.path("per_query.csv") + " > " + ws.path("eval.out") + " 2>&1";
    REQUIRE(std::system(eval_cmd.c_str()) == 0);
    std::ifstream eval_out(ws.path("eval.out"));
    std::string line;
    std::getline(eval_out, line);
    CHECK(line.find("MRR@5=") == 0);
    CHECK(line.find("P@5=") != std::string::npos);
    CHECK(line.find("n=16") != std::string::npos);

    std::ifstream csv(ws.path("per_query.csv"));
    std::getline(csv, line);
    CHECK(line == "query_id,mrr@5,p@5");

    const std::string sig_cmd = mmr_bin() + " significance --run-a " + ws.path("cap.run") +
                                " --run-b " + ws.path("orig.run") + " --queries " +
                                ws.path("queries.jsonl") + " --passages " +
                                ws.path("passages.jsonl") + " > " + ws.path("sig.out") + " 2>&1";
    REQUIRE(std::system(sig_cmd.c_str()) == 0);
    std::ifstream sig_out(ws.path("sig.out"));
    std::getline(sig_out, line);
    CHECK(line.find("mrr@5: t=") == 0);
    CHECK(line.find(" p=") != std::string::npos);
    std::getline(sig_out, line);
    CHECK(line.find("p@5: t=") == 0);
}

TEST_SUITE_END();
