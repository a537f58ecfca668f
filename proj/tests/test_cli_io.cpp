#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "mve/cli.hpp"
#include "mve/cli_io.hpp"
#include "mve/errors.hpp"

using namespace mve;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::current_path() / "cli_io_scratch" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    if (out_text) *out_text = out.str();
    return code;
}

CsvErrorKind error_kind(std::string_view text) {
    try {
        parse_csv(text);
    } catch (const CsvError& e) {
        return e.kind();
    }
    FAIL("expected a CsvError");
    return CsvErrorKind::EmptyFile;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("CSV parsing") {
    SUBCASE("header, target last") {
        const Dataset d = parse_csv("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        CHECK(d.size() == 3);
        CHECK(d.features() == 2);
        CHECK(d.y == std::vector<double>{3, 6, 9});
        CHECK(d.X(2, 1) == 8);
    }
    SUBCASE("target by name or index, no header") {
        const Dataset byname = parse_csv("y,a\n1,2\n3,4\n", CsvOptions{"y"});
        CHECK(byname.y == std::vector<double>{1, 3});
        CHECK(byname.X(1, 0) == 4);
        const Dataset byindex = parse_csv("1,2,9\n3,4,9\n", CsvOptions{"0", false});
        CHECK(byindex.y == std::vector<double>{1, 3});
        CHECK(byindex.features() == 2);
    }
    SUBCASE("blank cell names row and column") {
        try {
            parse_csv("a,b,y\n1,2,3\n4,,6\n");
            FAIL("no error");
        } catch (const CsvError& e) {
            CHECK(e.kind() == CsvErrorKind::BlankCell);
            CHECK(e.row() == 3);
            CHECK(e.column() == 2);
            CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        }
    }
    CHECK(error_kind("") == CsvErrorKind::EmptyFile);
    CHECK(error_kind("a,y\n") == CsvErrorKind::EmptyFile);
    CHECK(error_kind("a,y\n1,abc\n") == CsvErrorKind::NonNumeric);
    CHECK(error_kind("a,y\n1,2\n3\n") == CsvErrorKind::RaggedRow);
    CHECK_THROWS_AS(parse_csv("a,y\n1,2\n", CsvOptions{"z"}), CsvError);
    CHECK_THROWS_AS(load_csv("definitely/not/here.csv"), DataError);
}

TEST_CASE("dataset CSV round trip is bit-exact") {
    const Dataset d = generate({SyntheticKind::QuadraticHetero, 200, 4});
    const Dataset back = parse_csv(dataset_to_csv(d));
    CHECK(back.X.data == d.X.data);
    CHECK(back.y == d.y);
    const fs::path dir = scratch("roundtrip");
    write_text_file(dir / "d.csv", dataset_to_csv(d));
    CHECK(load_csv(dir / "d.csv").y == d.y);
}

TEST_CASE("number formatting") {
    CHECK(format_number(1.234567) == "1.23457e+00");
    CHECK(format_number(-0.000123456789) == "-1.23457e-04");
    CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_number(std::nan("")) == "nan");
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123}) {
        const std::string once = format_number(v);
        CHECK(format_number(std::stod(once)) == once);
        CHECK(std::stod(format_exact(v)) == v);
    }
    CHECK(to_csv({"a", "b"}, {{"1", "2"}}) == "a,b\n1,2\n");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest JSON round trip") {
    RunManifest m;
    m.version = "1.0";
    m.command = "bench";
    m.argv = {"bench", "--seed", "3"};
    m.seed = 3;
    m.configs = {"a = 1\n"};
    m.plan = make_cv_plan(20, 1, 2, 2);
    m.inputs = {{"x.csv", "00"}};
    m.outputs = {{"y.csv", "11"}};
    m.exit_code = 2;
    const RunManifest b = RunManifest::from_json(m.to_json());
    CHECK(b.argv == m.argv);
    CHECK(b.seed == 3);
    CHECK(b.plan->outer_assignment == m.plan->outer_assignment);
    CHECK(b.outputs == m.outputs);
    CHECK(b.exit_code == 2);
    CHECK(b.to_json() == m.to_json());
}

TEST_CASE("cli: exit codes") {
    CHECK(run({"frobnicate"}) == kExitUsage);
    CHECK(run({"bench", "--no-such-flag"}) == kExitUsage);
    CHECK(run({}) == kExitUsage);
    const fs::path dir = scratch("exit");
    CHECK(run({"bench", "--data", (dir / "missing.csv").string(), "--out", (dir / "b").string()}) == kExitData);
    write_text_file(dir / "bad.csv", "a,y\n1,2\n3,\n");
    CHECK(run({"train", "--data", (dir / "bad.csv").string(), "--out", (dir / "t").string()}) == kExitData);
    // An absurd learning rate blows the weights up to a non-finite loss.
    CHECK(run({"train", "--synthetic", "quadratic", "--n", "40", "--lr", "1e150", "--epochs", "5", "--out",
               (dir / "div").string()}) == kExitDivergence);
}

TEST_CASE("cli: landscape demo flags exactly two minima") {
    const fs::path dir = scratch("landscape");
    REQUIRE(run({"demo", "landscape", "--out", dir.string()}) == kExitOk);
    const Dataset prof = parse_csv(read_text_file(dir / "profile.csv"), CsvOptions{"local_minimum"});
    double flagged = 0.0;
    for (double v : prof.y) flagged += v;
    CHECK(flagged == 2.0);
    CHECK(fs::exists(dir / "minima.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("cli: bench on a 30-row toy CSV") {
    const fs::path dir = scratch("bench");
    write_text_file(dir / "toy.csv", dataset_to_csv(generate({SyntheticKind::QuadraticHetero, 30, 8})));
    const std::vector<std::string> args = {"bench",        "--data",        (dir / "toy.csv").string(),
                                           "--outer-folds", "3",             "--inner-folds",
                                           "2",            "--lambda-grid", "0.01,0.1",
                                           "--epochs",     "2",             "--hidden",
                                           "4",            "--threads",     "1",
                                           "--quiet",      "--out",         (dir / "run").string()};
    REQUIRE(run(args) == kExitOk);
    const std::string table = read_text_file(dir / "run" / "results_table.txt");
    // One row per data set: 3 strategies x 2 modes = 6 cells per metric.
    CHECK(std::count(table.begin(), table.end(), '\xb1') == 12);  // second byte of U+00B1
    const std::string results = read_text_file(dir / "run" / "results.csv");
    CHECK(count_lines(results) == 1 + 6);
    CHECK(count_lines(read_text_file(dir / "run" / "selected_lambdas.csv")) == 1 + 3 * 6);

    SUBCASE("replay reproduces identical outputs") {
        REQUIRE(run({"replay", (dir / "run" / "manifest.json").string(), "--out", (dir / "again").string()}) ==
                kExitOk);
        const RunManifest a = RunManifest::from_json(read_text_file(dir / "run" / "manifest.json"));
        const RunManifest b = RunManifest::from_json(read_text_file(dir / "again" / "manifest.json"));
        CHECK(a.outputs == b.outputs);
        for (const auto& [name, sum] : a.outputs)
            CHECK(read_text_file(dir / "run" / name) == read_text_file(dir / "again" / name));
    }
    SUBCASE("replay refuses a modified input") {
        write_text_file(dir / "toy.csv", "a,y\n1,2\n3,4\n");
        CHECK(run({"replay", (dir / "run" / "manifest.json").string(), "--out", (dir / "x").string()}) == kExitData);
    }
}

TEST_CASE("cli: oracle and train") {
    const fs::path dir = scratch("misc");
    CHECK(run({"oracle", "--out", (dir / "oracle").string()}) == kExitOk);
    CHECK(fs::exists(dir / "oracle" / "oracle.csv"));
    REQUIRE(run({"train", "--synthetic", "sine", "--n", "50", "--epochs", "2", "--hidden", "4", "--strategy",
                 "warmup", "--out", (dir / "train").string()}) == kExitOk);
    for (const char* f : {"config.txt", "network.json", "standardization.csv", "trace.csv", "metrics.csv"})
        CHECK(fs::exists(dir / "train" / f));
    const TrainConfig cfg = config_from_text(read_text_file(dir / "train" / "config.txt"));
    CHECK(cfg.strategy == Strategy::Warmup);
    CHECK(cfg.epochs_per_stage == 2);
}
