#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "gatenet/errors.hpp"
#include "gatenet/pipeline.hpp"
#include "support.hpp"

using namespace gatenet;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const fs::path& out, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.mnist_dir = support::mnist_dir();
  c.out_dir = out;
  c.task = Task::spatial2;
  c.scale = 40;
  c.runs = 2;
  c.seed = seed;
  c.epochs = 1;
  c.pretrain_epochs = 1;
  c.visualize_samples = {0, 1};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void run_all(const ExperimentConfig& c) {
  cmd_gen_data(c, nullptr, &support::mnist());
  cmd_pretrain(c, nullptr);
  cmd_train(c, nullptr);
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("provenance strings round-trip") {
    const std::map<std::string, std::string> fields{{"data", "abc"}, {"seed", "4"}};
    CHECK(format_provenance(fields) == "data=abc;seed=4");
    CHECK(parse_provenance("data=abc;seed=4") == fields);
    CHECK_THROWS_AS(parse_provenance("data"), FormatError);
  }

  TEST_CASE("downstream stages refuse to run without their inputs") {
    support::TempDir dir("pipeline");
    const ExperimentConfig c = tiny(dir.path());
    CHECK_THROWS_AS(cmd_pretrain(c, nullptr), MissingInput);
    CHECK_THROWS_AS(cmd_train(c, nullptr), MissingInput);
    CHECK_THROWS_AS(cmd_report(c, nullptr), MissingInput);
    ExperimentConfig no_mnist = c;
    no_mnist.mnist_dir = dir.path() / "nowhere";
    CHECK_THROWS_AS(cmd_gen_data(no_mnist, nullptr), MissingInput);
  }

  TEST_CASE("end to end at tiny scale") {
    REQUIRE_MNIST();
    support::TempDir dir("pipeline");
    const ExperimentConfig c = tiny(dir.path());
    const ExperimentPaths paths = experiment_paths(c);

    CHECK_FALSE(cmd_gen_data(c, nullptr, &support::mnist()).up_to_date);
    CHECK(cmd_gen_data(c, nullptr, &support::mnist()).up_to_date);

    const PretrainOutcome pre = cmd_pretrain(c, nullptr);
    CHECK(pre.test_accuracy > 0.5);
    CHECK(fs::exists(paths.function_checkpoint));
    CHECK(fs::exists(paths.pretrain_record));

    const TrainOutcome trained = cmd_train(c, nullptr);
    REQUIRE(trained.runs.size() == 2);
    CHECK(trained.runs[0].seed == 1);
    CHECK(trained.runs[1].seed == 2);
    CHECK(fs::exists(paths.context_checkpoint(1)));

    const EvalOutcome eval = cmd_eval(c, nullptr);
    CHECK(eval.baseline == trained.runs[0].baseline_accuracy);
    REQUIRE(eval.dual.size() == 2);
    CHECK(eval.dual[1] == trained.runs[1].dual_accuracy);

    const ExperimentReport report = cmd_report(c, nullptr);
    CHECK(report.n_runs == 2);
    CHECK_FALSE(report.single_run);
    CHECK(slurp(paths.report_table).find("FN + CN") != std::string::npos);
    CHECK(slurp(paths.report_csv).rfind("task,run,seed,baseline,dual,improvement\n", 0) == 0);

    const VisualizeOutcome vis = cmd_visualize(c, nullptr);
    CHECK(vis.files.size() >= 2);
    for (const fs::path& f : vis.files) CHECK(fs::exists(f));
    CHECK(vis.audited_samples > 0);
    CHECK(vis.separation.attended_mean.size() == 16);

    // Merging a record with itself repeats seeds.
    CHECK_THROWS_AS(cmd_report(c, nullptr, {paths.runs_record}), ProvenanceError);

    {
      support::TempDir other("pipeline");
      ExperimentConfig c2 = tiny(other.path());
      c2.seed = 3;
      run_all(c2);
      CHECK_THROWS_AS(cmd_report(c, nullptr, {experiment_paths(c2).runs_record}), ProvenanceError);
    }

    auto j = nlohmann::json::parse(slurp(paths.runs_record));
    j["runs"].erase(1);
    std::ofstream(paths.runs_record, std::ios::trunc) << j.dump();
    const ExperimentReport single = cmd_report(c, nullptr);
    CHECK(single.single_run);
    CHECK(slurp(paths.report_table).find("single run") != std::string::npos);

    // Regenerating data under another seed makes the classifier stale.
    const ExperimentConfig reseeded = tiny(dir.path(), 5);
    CHECK_FALSE(cmd_gen_data(reseeded, nullptr, &support::mnist()).up_to_date);
    CHECK_THROWS_AS(cmd_train(reseeded, nullptr), ProvenanceError);
  }

  TEST_CASE("identical configurations reproduce identical artifacts") {
    REQUIRE_MNIST();
    support::TempDir a("pipeline"), b("pipeline");
    ExperimentConfig ca = tiny(a.path()), cb = tiny(b.path());
    ca.runs = cb.runs = 1;
    ca.visualize_run = cb.visualize_run = 0;
    run_all(ca);
    run_all(cb);
    const auto pa = experiment_paths(ca), pb = experiment_paths(cb);
    CHECK(slurp(pa.function_checkpoint) == slurp(pb.function_checkpoint));
    CHECK(slurp(pa.context_checkpoint(0)) == slurp(pb.context_checkpoint(0)));
    CHECK(slurp(pa.runs_record) == slurp(pb.runs_record));
  }
}
