#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "robustgp/csv_io.hpp"
#include "robustgp/model.hpp"
#include "robustgp/simulation.hpp"

using namespace robustgp;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string("ROBUSTGP_LOG=error ") + ROBUSTGP_CLI + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string run_stdout(const std::string& args) {
    const std::string cmd = std::string("ROBUSTGP_LOG=error ") + ROBUSTGP_CLI + " " + args + " 2>/dev/null";
    std::string out;
    if (FILE* p = popen(cmd.c_str(), "r")) {
        char buf[256];
        while (fgets(buf, sizeof buf, p)) out += buf;
        pclose(p);
    }
    return out;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("robustgp_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("simulate writes the documented columns, deterministically") {
    const fs::path d = scratch_dir("sim");
    REQUIRE(run("simulate --gen synth1d --q 0.1 --mu-o 3 --sigma-ratio 6 --seed 7 --out " + q(d / "a")) == 0);
    REQUIRE(run("simulate --gen synth1d --q 0.1 --mu-o 3 --sigma-ratio 6 --seed 7 --out " + q(d / "b")) == 0);
    const CsvTable t = read_csv_file((d / "a" / "train.csv").string());
    CHECK(t.values.rows() == 300);
    CHECK(t.header == std::vector<std::string>{"x1", "y", "is_outlier"});
    CHECK(read_csv_file((d / "a" / "test.csv").string()).values.rows() == 1000);
    CHECK(slurp(d / "a" / "train.csv") == slurp(d / "b" / "train.csv"));
    CHECK(slurp(d / "a" / "test.csv") == slurp(d / "b" / "test.csv"));

    REQUIRE(run("simulate --gen friedman --seed 7 --out " + q(d / "f")) == 0);
    CHECK(read_csv_file((d / "f" / "train.csv").string()).header.size() == 12);
}

TEST_CASE("plain GP interpolates a noise-free line; predict agrees with the API") {
    const fs::path d = scratch_dir("line");
    Matrix X(20, 1);
    Vector y(20);
    for (int i = 0; i < 20; ++i) X(i, 0) = y[i] = -1.0 + 0.1 * i;
    write_dataset_csv((d / "train.csv").string(), Dataset(X, y));
    REQUIRE(run("fit --model plain --train " + q(d / "train.csv") + " --out " + q(d / "m.json")) == 0);
    REQUIRE(run("predict --model " + q(d / "m.json") + " --input " + q(d / "train.csv") + " --out " + q(d / "p.csv")) == 0);
    const CsvTable p = read_csv_file((d / "p.csv").string());
    REQUIRE(p.values.rows() == 20);
    CHECK((p.values.col(p.column("mean")) - y).cwiseAbs().maxCoeff() < 1e-3);

    FitConfig cfg;
    cfg.model = ModelKind::PlainGP;
    const Prediction api = predict_model(fit_model(Dataset(X, y), cfg), X);
    CHECK((p.values.col(p.column("mean")) - api.mean).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p.values.col(p.column("latent_variance")) - api.latent_variance).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p.values.col(p.column("observation_variance")) - api.observation_variance).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("COB fit on sparse outliers: log lists the outliers; refit is identical") {
    const fs::path d = scratch_dir("cob");
    const ScenarioData s = generate_sparse_outlier_example(1);
    write_dataset_csv((d / "train.csv").string(), s.train, &s.outlier_mask);
    const std::string fit = "fit --model cob --kernel exp --seed 3 --train " + q(d / "train.csv");
    REQUIRE(run(fit + " --out " + q(d / "m1.json")) == 0);
    REQUIRE(run(fit + " --out " + q(d / "m2.json")) == 0);
    CHECK(slurp(d / "m1.json") == slurp(d / "m2.json"));

    const auto log = nlohmann::json::parse(slurp(d / "m1.json.log.json"));
    std::vector<int> truth;
    for (std::size_t i = 0; i < s.outlier_mask.size(); ++i)
        if (s.outlier_mask[i]) truth.push_back(static_cast<int>(i));
    CHECK(log["large_bias_indices"].get<std::vector<int>>() == truth);
    CHECK(log["objective_trace"].size() >= 1);
    CHECK(log.contains("fit_seconds"));
    CHECK(log.contains("lambda"));

    // Evaluate on the noise-free curve.
    write_dataset_csv((d / "truth.csv").string(), s.test);
    REQUIRE(run("predict --model " + q(d / "m1.json") + " --input " + q(d / "truth.csv") + " --out " + q(d / "p.csv")) == 0);
    const std::string out = run_stdout("eval --pred " + q(d / "p.csv") + " --truth " + q(d / "truth.csv"));
    CHECK(out.find("mse ") != std::string::npos);
    CHECK(out.find("nlpd ") != std::string::npos);

    const FittedModel m = deserialize_model(slurp(d / "m1.json"));
    const Prediction pr = predict_model(m, s.test.X);
    const double want = mse(s.test.y, pr.mean);
    std::istringstream ss(out);
    std::string key;
    double got = 0;
    ss >> key >> got;
    CHECK(key == "mse");
    CHECK(std::abs(got - want) <= 1e-12);
}

TEST_CASE("exit codes") {
    const fs::path d = scratch_dir("codes");
    CHECK(run("") == 1);
    CHECK(run("fit --train") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("fit --train " + q(d / "missing.csv") + " --out " + q(d / "m.json")) == 2);

    std::ofstream(d / "bad.csv") << "x1,y\n1,2\n2,oops\n";
    CHECK(run("fit --train " + q(d / "bad.csv") + " --out " + q(d / "m.json")) == 2);

    std::ofstream(d / "small.csv") << "x1,y\n1,2\n2,3\n3,1\n";
    CHECK(run("fit --train " + q(d / "small.csv") + " --out " + q(d / "m.json")) == 2);

    std::ofstream(d / "cfg.json") << R"({"unknown": 1})";
    CHECK(run("fit --config " + q(d / "cfg.json") + " --train " + q(d / "small.csv") + " --out " + q(d / "m.json")) == 2);

    std::ofstream(d / "pred.csv") << "mean,observation_variance\n1,1\n";
    std::ofstream(d / "truth.csv") << "x1,y\n1,1\n2,2\n";
    CHECK(run("eval --pred " + q(d / "pred.csv") + " --truth " + q(d / "truth.csv")) == 2);
}

TEST_CASE("experiment: parallelism does not change outputs") {
    const fs::path d = scratch_dir("exp");
    const std::string base = "experiment --single --n-train 40 --n-test 50 --models cob,plain --replicates 2 --seed 5";
    REQUIRE(run(base + " --parallelism 1 --out " + q(d / "p1")) == 0);
    REQUIRE(run(base + " --parallelism 3 --out " + q(d / "p3")) == 0);
    for (const char* f : {"raw.csv", "aggregate.csv", "report.json"}) {
        INFO(f);
        CHECK(slurp(d / "p1" / f) == slurp(d / "p3" / f));
    }
}
