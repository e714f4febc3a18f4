#include <doctest.h>

#include <cstring>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "probmatch/error.hpp"
#include "probmatch/io.hpp"

using namespace probmatch;

namespace {

StudyDataset load_string(const std::string& text, DataFormat f) {
  std::istringstream in(text);
  return load_dataset(in, f);
}

std::string schema_message(const std::string& text, DataFormat f) {
  try {
    load_string(text, f);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::schema);
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("load csv") {
  const auto d = load_string("x,z1\n1,0.5\n0,1.5\n1,2\n", DataFormat::csv);
  CHECK(d.n_units() == 3);
  CHECK(d.n_confounders() == 1);
  CHECK(d.observed().all_point_mass());
  CHECK(d.observed().confounder(0, 2).value() == 2);
  CHECK(d.observed().confounder_names() == std::vector<std::string>{"z1"});

  const auto o = load_string("treatment,a,y,b,truth_x,truth_a,truth_b\n1,2,3,4,1,2,4\n0,1,2,3,0,1,3\n", DataFormat::csv);
  CHECK(o.n_confounders() == 2);
  REQUIRE(o.outcome());
  CHECK((*o.outcome())[0] == 3);
  REQUIRE(o.truth());
  CHECK(o.truth()->confounders[1][1] == 3);

  CHECK(schema_message("z1,z2\n1,2\n3,4\n", DataFormat::csv).find("treatment") != std::string::npos);
  CHECK(schema_message("x,z\n1,2\n3\n", DataFormat::csv).find("line 3") != std::string::npos);
  CHECK(schema_message("x,z\n1,nan\n0,1\n", DataFormat::csv).find("NaN") != std::string::npos);
  CHECK(schema_message("x,z\n1,abc\n0,1\n", DataFormat::csv).find("malformed") != std::string::npos);
  CHECK(schema_message("", DataFormat::csv).find("empty") != std::string::npos);
}

TEST_CASE("load json") {
  const auto d = load_string(
      R"({"treatment":[{"support":[0,1],"probs":[0.3,0.7]},1,0],
          "confounders":[[1,{"samples":[1,2,3]},2.5]], "outcome":[1,2,3]})",
      DataFormat::json);
  const auto& b = d.observed().treatment(0);
  REQUIRE(b.size() == 2);
  CHECK(b.values()[1] == 1.0);
  CHECK(b.weight(1) == doctest::Approx(0.7));
  CHECK(mean(b) == doctest::Approx(mean(StochasticScalar::bernoulli(0.7))));
  CHECK(d.observed().confounder(0, 1).kind() == StochasticScalar::Kind::empirical);
  REQUIRE(d.outcome());

  const auto unnorm = schema_message(R"({"treatment":[{"support":[0,1],"probs":[0.3,0.6]},1],"confounders":[[1,2]]})",
                                     DataFormat::json);
  CHECK(unnorm.find("unnormalized") != std::string::npos);
  CHECK(unnorm.find("treatment[0]") != std::string::npos);
  CHECK(schema_message(R"({"treatment":[1,0,1],"confounders":[[1,2]]})", DataFormat::json).find("length") !=
        std::string::npos);
  CHECK(schema_message(R"({"confounders":[[1,2]]})", DataFormat::json).find("treatment") != std::string::npos);
  CHECK(schema_message(R"({"treatment":[1,0],"confounders":[[1,2]],"outcome":[1,"a"]})", DataFormat::json) != "");
  CHECK(schema_message("{not json", DataFormat::json).find("malformed") != std::string::npos);
}

TEST_CASE("round trips") {
  SUBCASE("point-mass data is bit exact through csv and json") {
    const auto obs = fixture::random_continuous(25, 3, 4);
    std::vector<double> y;
    for (int i = 0; i < 25; ++i) y.push_back(0.1 * i + 1.0 / 3.0);
    GroundTruth t;
    for (UnitId u = 0; u < 25; ++u) t.treatment.push_back(obs.treatment(u).value() * 0.7);
    for (std::size_t p = 0; p < 3; ++p) t.confounders.push_back(obs.confounder_means(p));
    const StudyDataset d(obs, y, t);

    std::ostringstream csv;
    save_dataset_csv(d, csv);
    const auto back = load_string(csv.str(), DataFormat::csv);
    std::ostringstream js;
    js << dataset_to_json(d).dump();
    const auto back2 = load_string(js.str(), DataFormat::json);
    for (const auto* b : {&back, &back2}) {
      for (UnitId u = 0; u < 25; ++u) {
        CHECK(b->observed().treatment(u) == obs.treatment(u));
        for (std::size_t p = 0; p < 3; ++p) CHECK(b->observed().confounder(p, u) == obs.confounder(p, u));
      }
      CHECK(*b->outcome() == y);
      CHECK(b->truth()->treatment == t.treatment);
      CHECK(b->truth()->confounders == t.confounders);
    }
  }
  SUBCASE("distribution cells within 1e-12") {
    const Observations obs({StochasticScalar::discrete({0.1, 0.2, 0.7}, {1.0 / 3, 1.0 / 3, 1.0 / 3}),
                            StochasticScalar::empirical({0.3, 1e-17, 2.5})},
                           {{StochasticScalar::bernoulli(0.123456789), StochasticScalar::point(-4)}});
    const StudyDataset d(obs);
    const auto back = load_string(dataset_to_json(d).dump(), DataFormat::json);
    for (UnitId u = 0; u < 2; ++u) {
      const auto& a = d.observed().treatment(u);
      const auto& b = back.observed().treatment(u);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a.values()[i] - b.values()[i]) <= 1e-12 * std::max(1.0, std::abs(a.values()[i])));
        CHECK(std::abs(a.weight(i) - b.weight(i)) <= 1e-12);
      }
    }
    CHECK(back.observed().confounder(0, 0) == obs.confounder(0, 0));
  }
  SUBCASE("format_double") {
    for (double v : {0.1, 1.0 / 3, 1e-300, -2.5e17, 123456789.0}) CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("save_pairs") {
  std::ostringstream a, b, c;
  save_pairs(MatchedPairSet({{0, 1}}), a);
  CHECK(a.str() == "treated,control\n0,1\n");
  save_pairs(MatchedPairSet(), b);
  CHECK(b.str() == "treated,control\n");
  save_pairs(MatchedPairSet({{2, 0}, {1, 3}}), c);
  CHECK(c.str() == "treated,control\n2,0\n1,3\n");
  CHECK_THROWS_AS(MatchedPairSet({{1, 1}}), Error);
}

TEST_CASE("truth sidecar") {
  const auto d = load_string(R"({"treatment":[1,0],"confounders":[[1,2]]})", DataFormat::json);
  const auto t = attach_truth(d, nlohmann::json::parse(R"({"truth":{"treatment":[1,1],"confounders":[[3,4]]}})"));
  CHECK(t.truth()->treatment == std::vector<double>{1, 1});
  CHECK(t.truth_observations().confounder(0, 1).value() == 4);
  CHECK_THROWS_AS(attach_truth(d, nlohmann::json::parse(R"({"truth":{"treatment":[1],"confounders":[[3]]}})")), Error);
  CHECK_THROWS_AS(d.truth_observations(), Error);
}
