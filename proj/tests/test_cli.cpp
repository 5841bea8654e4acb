#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../tools/cli.hpp"
#include "readmit/eval.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("readmit_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = readmit::run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Re-deals CSV data rows in a fixed shuffled order, keeping the header.
void shuffle_rows(const fs::path& p, unsigned seed) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::string header;
    REQUIRE(static_cast<bool>(std::getline(in, header)));
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(line);
    in.close();
    std::shuffle(rows.begin(), rows.end(), std::mt19937(seed));
    std::ofstream out(p, std::ios::binary);
    out << header << "\n";
    for (const std::string& r : rows) out << r << "\n";
}

}  // namespace

TEST_CASE("kb-validate reports the builtin knowledge base") {
    const CliResult r = run({"kb-validate"});
    CHECK(r.code == 0);
    CHECK(r.out.find("readmission-1") != std::string::npos);
    CHECK(r.out.find("17 concepts") != std::string::npos);
}

TEST_CASE("usage problems exit with code 1") {
    CHECK(run({"no-such-command"}).code == 1);
    CHECK(run({}).code == 1);  // a subcommand is required
    const CliResult bad_enum =
        run({"abstract", "--events", "x.csv", "--stays", "y.csv", "--out", "z.jsonl",
             "--gradient-mode", "wiggly"});
    CHECK(bad_enum.code == 1);
    CHECK(bad_enum.err.find("usage error") != std::string::npos);
}

TEST_CASE("data problems exit with code 2") {
    TempDir dir("missing");
    const CliResult r = run({"cohort", "--events", dir.sub("nope_events.csv"), "--stays",
                             dir.sub("nope_stays.csv"), "--out", dir.sub("decisions.csv")});
    CHECK(r.code == 2);
    CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("help is exit code 0 at both levels") {
    const CliResult top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("Usage") != std::string::npos);
    const CliResult sub = run({"synth", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--rate") != std::string::npos);
}

TEST_CASE("synth plus pipeline produces a five-fold aggregate") {
    TempDir dir("pipe");
    const std::string data = dir.sub("data");
    fs::create_directories(data);
    CHECK(run({"synth", "--n", "60", "--seed", "11", "--out", data}).code == 0);

    const std::string out = dir.sub("out");
    const CliResult r =
        run({"--seed", "11", "pipeline", "--events", data + "/events.csv", "--stays",
             data + "/stays.csv", "--icd9", data + "/icd9.csv", "--variant", "charts_1hot",
             "--lr", "0.5", "--out", out});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);

    const nlohmann::json agg = nlohmann::json::parse(slurp(fs::path(out) / "aggregate.json"));
    CHECK(agg.at("folds").get<int>() == 5);
    const double auroc = agg.at("auroc").at("mean").get<double>();
    CHECK(auroc >= 0.0);
    CHECK(auroc <= 1.0);
    CHECK(r.out.find("AUROC") != std::string::npos);
    for (const char* name :
         {"stays.jsonl", "decisions.csv", "folds.csv", "abstractions.jsonl", "aggregate.txt",
          "fold_0/model.json", "fold_0/metrics.json", "fold_4/scores.csv", "manifest.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(out) / name));
    }
}

TEST_CASE("cohort decisions do not depend on CSV row order") {
    TempDir dir("order");
    const std::string data = dir.sub("data");
    fs::create_directories(data);
    REQUIRE(run({"synth", "--n", "40", "--seed", "21", "--out", data}).code == 0);

    const auto decide = [&](const std::string& tag) {
        const std::string out = dir.sub(tag);
        const CliResult r = run({"cohort", "--events", data + "/events.csv", "--stays",
                                 data + "/stays.csv", "--icd9", data + "/icd9.csv", "--out", out});
        CAPTURE(r.err);
        REQUIRE(r.code == 0);
        return slurp(out);
    };
    const std::string original = decide("a.csv");
    shuffle_rows(fs::path(data) / "events.csv", 1);
    shuffle_rows(fs::path(data) / "stays.csv", 2);
    shuffle_rows(fs::path(data) / "icd9.csv", 3);
    CHECK(decide("b.csv") == original);
}

TEST_CASE("identical invocations rewrite identical artifact bytes") {
    TempDir dir("rerun");
    const std::string data = dir.sub("data");
    fs::create_directories(data);
    REQUIRE(run({"synth", "--n", "30", "--seed", "3", "--out", data}).code == 0);

    const auto abstract_once = [&](const std::string& tag) {
        const std::string out = dir.sub(tag);
        const CliResult r = run({"abstract", "--events", data + "/events.csv", "--stays",
                                 data + "/stays.csv", "--out", out});
        REQUIRE(r.code == 0);
        return slurp(out);
    };
    const bool identical = abstract_once("one.jsonl") == abstract_once("two.jsonl");
    CHECK(identical);
}

TEST_CASE("config files feed options and explicit flags win") {
    TempDir dir("config");
    {
        std::ofstream cfg(dir.sub("cfg.json"), std::ios::binary);
        cfg << R"({"n": 40, "seed": 5})" << "\n";
    }
    const std::string a = dir.sub("a");
    fs::create_directories(a);
    REQUIRE(run({"synth", "--config", dir.sub("cfg.json"), "--out", a}).code == 0);
    // 40 patients from the config file: truth has at least 40 rows.
    std::ifstream truth_a(fs::path(a) / "truth.csv");
    const std::size_t lines_a = std::count(std::istreambuf_iterator<char>(truth_a),
                                           std::istreambuf_iterator<char>(), '\n');
    CHECK(lines_a >= 41);

    const std::string b = dir.sub("b");
    fs::create_directories(b);
    REQUIRE(run({"synth", "--config", dir.sub("cfg.json"), "--n", "15", "--out", b}).code == 0);
    std::ifstream truth_b(fs::path(b) / "truth.csv");
    const std::size_t lines_b = std::count(std::istreambuf_iterator<char>(truth_b),
                                           std::istreambuf_iterator<char>(), '\n');
    CHECK(lines_b < lines_a);
    CHECK(lines_b >= 16);
}

TEST_CASE("compare prints a verdict") {
    TempDir dir("compare");
    const auto write_report = [&](const std::string& name, double base) {
        readmit::MetricsReport m;
        m.auroc = base;
        m.auprc = base - 0.05;
        m.f1 = base - 0.1;
        m.precision = base - 0.15;
        m.recall = base - 0.2;
        m.threshold = 0.5;
        std::ofstream f(dir.sub(name), std::ios::binary);
        f << m.to_json().dump(2) << "\n";
        return dir.sub(name);
    };
    const std::string a = write_report("a.json", 0.9);
    const std::string b = write_report("b.json", 0.6);
    const CliResult r = run({"compare", a, b});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out == "A\n");
    CHECK(run({"compare", b, a}).out == "B\n");
    CHECK(run({"compare", a, a}).out == "inconclusive\n");
}

TEST_CASE("aggregate-notes pools chunk probabilities") {
    TempDir dir("notes");
    {
        std::ofstream f(dir.sub("notes.jsonl"), std::ios::binary);
        f << R"({"stay_id": "s1", "chunk_probs": [0.8, 0.4], "label": true})" << "\n";
        f << R"({"stay_id": "s2", "chunk_probs": [0.2], "label": false})" << "\n";
    }
    const CliResult r = run({"aggregate-notes", "--chunks", dir.sub("notes.jsonl"), "--out",
                             dir.sub("scores.csv")});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    const std::string csv = slurp(fs::path(dir.sub("scores.csv")));
    CHECK(csv.find("stay_id,score,label") == 0);
    CHECK(csv.find("s1,0.7") != std::string::npos);  // (0.8 + 0.6) / 2
    CHECK(csv.find("s2,0.2") != std::string::npos);
    CHECK(csv.find(",1\n") != std::string::npos);
    CHECK(csv.find(",0\n") != std::string::npos);
}
