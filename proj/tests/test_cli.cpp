#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mlsvm/dataset.hpp"
#include "mlsvm/rem.hpp"
#include "mlsvm/synthetic.hpp"

using namespace mlsvm;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch() {
        static std::atomic<int> counter{0};
        dir = fs::temp_directory_path() /
              ("mlsvm_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& out = "/dev/null", const std::string& err = "/dev/null") {
    const std::string cmd = std::string(MLSVM_CLI) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int level_rows(const std::string& report) {
    std::istringstream in(report);
    std::string line;
    bool table = false;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.rfind("level\t", 0) == 0) {
            table = true;
            continue;
        }
        if (table && !line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) ++n;
        else if (table) table = false;
    }
    return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("impute leaves no missing tokens") {
    Scratch s;
    write_dataset(s("in.csv"), inject_missing(make_correlated(120, 5, 0.6, 3), 0.15, 4));
    for (const char* method : {"rem", "mean"}) {
        CAPTURE(method);
        REQUIRE(run("impute --in " + s("in.csv") + " --out " + s("out.csv") + " --method " + method +
                    " --diagnostics " + s("diag.txt")) == 0);
        const std::string text = slurp(s("out.csv"));
        CHECK(text.find('?') == std::string::npos);
        CHECK_FALSE(load_dataset(s("out.csv")).has_missing());
        CHECK_FALSE(slurp(s("diag.txt")).empty());
    }
}

TEST_CASE("mean imputation matches column means of the observed cells") {
    Scratch s;
    const Dataset masked = inject_missing(make_correlated(60, 4, 0.3, 9), 0.2, 1);
    write_dataset(s("in.csv"), masked);
    REQUIRE(run("impute --method mean --in " + s("in.csv") + " --out " + s("out.csv")) == 0);
    const Dataset got = load_dataset(s("out.csv"));
    for (Eigen::Index c = 0; c < masked.features.cols(); ++c) {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index r = 0; r < masked.features.rows(); ++r)
            if (!masked.missing(r, c)) {
                sum += masked.features(r, c);
                ++n;
            }
        const double mean = sum / n;
        for (Eigen::Index r = 0; r < masked.features.rows(); ++r)
            if (masked.missing(r, c)) CHECK(got.features(r, c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("unreadable input exits 1 and writes nothing") {
    Scratch s;
    CHECK(run("impute --in " + s("nope.csv") + " --out " + s("out.csv")) == 1);
    CHECK_FALSE(fs::exists(s("out.csv")));
    CHECK(run("train --in " + s("nope.csv") + " --model " + s("m.txt")) == 1);
    CHECK_FALSE(fs::exists(s("m.txt")));
}

TEST_CASE("bad flags exit 1") {
    CHECK(run("train --in x --model y --method nonsense") == 1);
    CHECK(run("frobnicate") == 1);
}

TEST_CASE("train then predict on separable data") {
    Scratch s;
    write_dataset(s("train.csv"), make_imbalanced(400, 0.3, 3, 8.0, 5));
    write_dataset(s("test.csv"), make_imbalanced(200, 0.3, 3, 8.0, 6));
    for (const char* method : {"svm", "mlwsvm"}) {
        CAPTURE(method);
        REQUIRE(run("train --method " + std::string(method) + " --in " + s("train.csv") + " --model " + s("m.txt")) ==
                0);
        CHECK(fs::exists(s("m.txt.report")));
        REQUIRE(run("predict --in " + s("test.csv") + " --model " + s("m.txt") + " --out " + s("p.csv")) == 0);
        const Dataset truth = load_dataset(s("test.csv"));
        std::istringstream in(slurp(s("p.csv")));
        std::string line;
        std::getline(in, line);
        CHECK(line == "label,margin");
        std::size_t i = 0, right = 0;
        while (std::getline(in, line)) {
            const int label = std::stoi(line.substr(0, line.find(',')));
            right += truth.labels[i] == label ? 1 : 0;
            ++i;
        }
        CHECK(i == truth.rows());
        CHECK(static_cast<double>(right) / static_cast<double>(i) >= 0.99);
    }
}

TEST_CASE("predict fills missing cells") {
    Scratch s;
    write_dataset(s("train.csv"), make_twonorm(200, 2, 4));
    write_dataset(s("test.csv"), inject_missing(make_twonorm(50, 3, 4), 0.2, 3));
    REQUIRE(run("train --method svm --in " + s("train.csv") + " --model " + s("m.txt")) == 0);
    REQUIRE(run("predict --in " + s("test.csv") + " --model " + s("m.txt") + " --out " + s("p.csv")) == 0);
    CHECK(slurp(s("p.csv")).find("nan") == std::string::npos);
}

TEST_CASE("same seed gives byte-identical models") {
    Scratch s;
    write_dataset(s("in.csv"), make_twonorm(600, 12, 5));
    const std::string base = "--seed 4 --timing off train --method mlsvm --coarsest-max 200 --in " + s("in.csv");
    REQUIRE(run(base + " --model " + s("a.txt")) == 0);
    REQUIRE(run(base + " --model " + s("b.txt")) == 0);
    CHECK(slurp(s("a.txt")) == slurp(s("b.txt")));
    CHECK(slurp(s("a.txt.report")) == slurp(s("b.txt.report")));
}

TEST_CASE("mlsvm report lists several levels on 8000 points") {
    Scratch s;
    write_dataset(s("in.csv"), make_twonorm(8000, 21, 4));
    REQUIRE(run("train --method mlsvm --in " + s("in.csv") + " --model " + s("m.txt")) == 0);
    CHECK(level_rows(slurp(s("m.txt.report"))) >= 2);
}

TEST_CASE("help lists the framework flags") {
    Scratch s;
    for (const char* sub : {"train", "evaluate", "benchmark"}) {
        CAPTURE(sub);
        REQUIRE(run(std::string(sub) + " --help", s("help.txt")) == 0);
        const std::string help = slurp(s("help.txt"));
        for (const char* flag : {"--method", "--Q", "--Qdt", "--coarsest-max", "--k", "--final"})
            CHECK(help.find(flag) != std::string::npos);
    }
    REQUIRE(run("--help", s("help.txt")) == 0);
    CHECK(slurp(s("help.txt")).find("--seed") != std::string::npos);
}

TEST_CASE("config file values apply and explicit flags win") {
    Scratch s;
    write_dataset(s("in.csv"), make_twonorm(160, 8, 3));
    {
        std::ofstream cfg(s("run.cfg"));
        cfg << "# single candidate\nud-stage1 = 1\nud-stage2 = 1\nC-min = 4\nC-max = 4\nseed = 3\n";
    }
    REQUIRE(run("--config " + s("run.cfg") + " train --method svm --in " + s("in.csv") + " --model " + s("m.txt")) ==
            0);
    const std::string report = slurp(s("m.txt.report"));
    CHECK(report.find("C 4\n") != std::string::npos);
    CHECK(report.find("evaluations 1\n") != std::string::npos);

    REQUIRE(run("--config " + s("run.cfg") + " train --method svm --C-min 2 --C-max 2 --in " + s("in.csv") +
                " --model " + s("m.txt")) == 0);
    CHECK(slurp(s("m.txt.report")).find("C 2\n") != std::string::npos);

    {
        std::ofstream cfg(s("bad.cfg"));
        cfg << "no-such-key = 1\n";
    }
    CHECK(run("--config " + s("bad.cfg") + " train --in " + s("in.csv") + " --model " + s("m.txt")) == 1);
}

TEST_CASE("worker count does not change output") {
    Scratch s;
    write_dataset(s("in.csv"), inject_missing(make_twonorm(300, 30, 4), 0.05, 2));
    const std::string base =
        "--timing off evaluate --methods svm,mlwsvm --folds 3 --coarsest-max 100 --in " + s("in.csv");
    REQUIRE(run("--workers 1 " + base, s("a.csv")) == 0);
    REQUIRE(run("--workers 2 " + base, s("b.csv")) == 0);
    CHECK_FALSE(slurp(s("a.csv")).empty());
    CHECK(slurp(s("a.csv")) == slurp(s("b.csv")));
    CHECK(slurp(s("a.csv")).find("seconds") == std::string::npos);
}

TEST_CASE("benchmark defaults and method filter") {
    Scratch s;
    write_dataset(s("in.csv"), make_imbalanced(90, 0.2, 3, 4.0, 8));
    REQUIRE(run("benchmark --methods svm,mlsvm --folds 2 --ud-stage1 1 --ud-stage2 1 --in " + s("in.csv"),
                s("out.csv"), s("err.txt")) == 0);
    const std::string out = slurp(s("out.csv"));
    for (const char* r : {"0.05", "0.10", "0.20", "0.40"}) CHECK(out.find(std::string(",") + r + ",") != std::string::npos);
    CHECK(out.find(",svm,") != std::string::npos);
    CHECK(out.find(",mlsvm,") != std::string::npos);
    CHECK(out.find("wsvm") == std::string::npos);
    CHECK(out.find("# G-mean") != std::string::npos);
    CHECK(out.find("# seconds") != std::string::npos);
}

TEST_CASE("benchmark with too few minority rows per fold warns") {
    Scratch s;
    write_dataset(s("in.csv"), make_imbalanced(40, 3.0 / 40.0, 2, 6.0, 2));
    REQUIRE(run("benchmark --methods svm --ratios 0 --folds 2 --ud-stage1 1 --ud-stage2 1 --in " + s("in.csv"),
                s("out.csv"), s("err.txt")) == 0);
    CHECK(slurp(s("err.txt")).find("[warning]") != std::string::npos);
}

}  // TEST_SUITE
