#include "dmpes/harness.hpp"

#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "dmpes/model_io.hpp"

namespace {

using namespace dmpes;

Model two_group_model() {
  Component treated;
  treated.center = Vector::Constant(2, 0.6);
  treated.covariance = Matrix::Identity(2, 2);
  treated.group = Group::kTreated;
  Component control;
  control.center = Vector::Zero(2);
  control.covariance = Matrix::Identity(2, 2);
  control.group = Group::kControl;
  return Model(2, {treated, control});
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.model = two_group_model();
  cfg.sizes.treated = 12;
  cfg.sizes.control = 36;
  cfg.sizes.matched_treated = 8;
  cfg.sizes.matched_control = 8;
  MatchSpec greedy;
  greedy.method = MatchMethod::kMahalanobisGreedy;
  cfg.methods = {greedy};
  cfg.directions.random_count = 3;
  cfg.directions.orthogonal_count = 2;
  cfg.replications = 8;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("suite names round trip and reject unknown tokens") {
  const std::vector<Suite> suites = {Suite::kAll,      Suite::kInvariance,
                                     Suite::kMeanStructure, Suite::kEpbr,
                                     Suite::kVariance, Suite::kConditional};
  for (Suite s : suites) {
    CHECK(parse_suite(suite_name(s)) == s);
  }
  CHECK(suite_name(Suite::kMeanStructure) == std::string("thm31"));
  CHECK_THROWS_AS(parse_suite("everything"), ConfigError);
}

TEST_CASE("config checks reject inconsistent requests") {
  SUBCASE("a valid tiny config passes") { tiny_config().check(); }

  SUBCASE("some model is required") {
    ExperimentConfig cfg = tiny_config();
    cfg.model.reset();
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  }

  SUBCASE("one replication cannot support standard errors") {
    ExperimentConfig cfg = tiny_config();
    cfg.replications = 1;
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  }

  SUBCASE("matched sizes cannot exceed the drawn groups") {
    ExperimentConfig cfg = tiny_config();
    cfg.sizes.matched_control = cfg.sizes.control + 1;
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  }

  SUBCASE("the random baseline is built in, not a method") {
    ExperimentConfig cfg = tiny_config();
    MatchSpec spec;
    spec.method = MatchMethod::kRandomSubsample;
    cfg.methods.push_back(spec);
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  }

  SUBCASE("conditional matching needs a conditional model") {
    ExperimentConfig cfg = tiny_config();
    MatchSpec spec;
    spec.method = MatchMethod::kConditional;
    cfg.methods.push_back(spec);
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  }
}

TEST_CASE("a two replication run records each design per replication") {
  ExperimentConfig cfg = tiny_config();
  cfg.replications = 2;
  const ReplicationStats stats = run_experiment(cfg, 1);
  CHECK(stats.rows.size() == 2);
  CHECK(stats.design_names.size() >= 2);  // method plus random baseline
  for (const ReplicationRecord& row : stats.rows) {
    CHECK(row.designs.size() == stats.design_names.size());
  }
  CHECK(stats.dim == 2);
  CHECK(stats.direction_ids.size() == stats.directions.size());
}

TEST_CASE("worker count never changes the collected statistics") {
  const ExperimentConfig cfg = tiny_config();
  const ReplicationStats one = run_experiment(cfg, 1);
  const ReplicationStats four = run_experiment(cfg, 4);
  CHECK(to_json(one).dump() == to_json(four).dump());
}

TEST_CASE("every verification covers the registry exactly once") {
  const ExperimentConfig cfg = tiny_config();
  const ReplicationStats stats = run_experiment(cfg, 1);
  const std::vector<std::string> registry = claim_registry();
  REQUIRE_FALSE(registry.empty());
  {
    const std::set<std::string> unique(registry.begin(), registry.end());
    REQUIRE(unique.size() == registry.size());
  }

  for (Suite s : {Suite::kAll, Suite::kEpbr, Suite::kInvariance}) {
    const VerificationReport report = verify(stats, s);
    REQUIRE(report.claims.size() == registry.size());
    for (size_t i = 0; i < registry.size(); ++i) {
      CHECK(report.claims[i].id == registry[i]);
    }
  }

  // A narrowed suite marks everything outside itself as skipped.
  const VerificationReport epbr = verify(stats, Suite::kEpbr);
  REQUIRE(epbr.find("invariance-mahalanobis-greedy") != nullptr);
  CHECK(epbr.find("invariance-mahalanobis-greedy")->verdict ==
        Verdict::kDegenerate);
  REQUIRE(epbr.find("epbr-uniform") != nullptr);
  CHECK(epbr.find("epbr-uniform")->verdict != Verdict::kDegenerate);
}

TEST_CASE("reports pass exactly when no claim failed") {
  VerificationReport report;
  Claim ok;
  ok.id = "a";
  ok.verdict = Verdict::kPass;
  Claim skipped;
  skipped.id = "b";
  skipped.verdict = Verdict::kDegenerate;
  report.claims = {ok, skipped};
  CHECK(report.all_pass());

  Claim bad;
  bad.id = "c";
  bad.verdict = Verdict::kFail;
  report.claims.push_back(bad);
  CHECK_FALSE(report.all_pass());
  REQUIRE(report.find("b") != nullptr);
  CHECK(report.find("b")->verdict == Verdict::kDegenerate);
  CHECK(report.find("missing") == nullptr);
}

TEST_CASE("stats serialization round trips bit for bit") {
  ExperimentConfig cfg = tiny_config();
  cfg.replications = 2;
  const ReplicationStats stats = run_experiment(cfg, 1);
  const Json j = to_json(stats);
  const ReplicationStats back = stats_from_json(j);
  CHECK(to_json(back).dump() == j.dump());

  const VerificationReport direct = verify(stats, Suite::kVariance);
  const VerificationReport loaded = verify(back, Suite::kVariance);
  CHECK(to_json(direct).dump() == to_json(loaded).dump());
}

TEST_CASE("the bundled verification configs load and check") {
  for (const char* name :
       {"generic_k3.json", "zero_z_k3.json", "determinism_smoke.json",
        "conditional_s1r3.json"}) {
    const ExperimentConfig cfg =
        load_experiment(std::string(DMPES_CONFIG_DIR) + "/" + name);
    cfg.check();
    CHECK(cfg.replications >= 2);
  }
}

}  // TEST_SUITE
