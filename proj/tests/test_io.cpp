#include "multicert/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace mc = multicert;
namespace io = multicert::io;

namespace {

const char* kFullConfig = R"({
  "task": "segmentation",
  "engine": "ablation",
  "modalities": [
    {"name": "audio", "n": 108, "k": 5, "attack": "modification"},
    {"name": "image", "n": 79380, "k": 1000, "attack": "modification"}
  ],
  "num_classes": 8,
  "alpha": 0.001,
  "N": 100,
  "mode": "fast",
  "direction": "3/2",
  "r_max": 10,
  "seed": 7,
  "ablation_k": 3000,
  "synth": {"num_samples": 5, "separation": 0.7}
})";

}  // namespace

TEST(ConfigParse, ReadsEveryField) {
  const auto cfg = io::parse_config(io::json::parse(kFullConfig));
  EXPECT_EQ(cfg.task, io::Task::kSegmentation);
  EXPECT_EQ(cfg.engine, io::Engine::kAblation);
  ASSERT_EQ(cfg.modalities.size(), 2u);
  EXPECT_EQ(cfg.modalities[0].name, "audio");
  EXPECT_EQ(cfg.modalities[0].n, 108);
  EXPECT_EQ(cfg.modalities[0].k, 5);
  EXPECT_EQ(cfg.modalities[1].attack, mc::AttackType::kModification);
  EXPECT_EQ(cfg.num_classes, 8);
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.001);
  EXPECT_EQ(cfg.mc_samples, 100);
  EXPECT_EQ(cfg.mode, mc::EvalMode::kFast);
  EXPECT_EQ(cfg.direction.num, 3);
  EXPECT_EQ(cfg.direction.den, 2);
  EXPECT_EQ(cfg.r_max, 10);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.ablation_k, 3000);
  EXPECT_EQ(cfg.synth.num_samples, 5);
  EXPECT_DOUBLE_EQ(cfg.synth.separation, 0.7);
  EXPECT_DOUBLE_EQ(cfg.synth.base_accuracy, 0.9);  // untouched default
}

TEST(ConfigParse, DefaultsAndValidation) {
  const auto minimal = io::json::parse(
      R"({"modalities":[{"n":10,"k":2}]})");
  const auto cfg = io::parse_config(minimal);
  EXPECT_EQ(cfg.task, io::Task::kClassification);
  EXPECT_EQ(cfg.engine, io::Engine::kMulticert);
  EXPECT_EQ(cfg.modalities[0].name, "m0");
  EXPECT_EQ(cfg.modalities[0].attack, mc::AttackType::kModification);
  EXPECT_EQ(cfg.num_classes, 2);
  EXPECT_EQ(cfg.mc_samples, 100);

  auto bad = [](const char* text) {
    EXPECT_THROW(io::parse_config(io::json::parse(text)), mc::ConfigError)
        << text;
  };
  bad(R"({"modalities":[]})");
  bad(R"({"modalities":[{"n":3,"k":9}]})");
  bad(R"({"modalities":[{"n":3,"k":1}],"alpha":1.5})");
  bad(R"({"modalities":[{"n":3,"k":1}],"task":"typo"})");
  bad(R"({"modalities":[{"n":3,"k":1}],"engine":"typo"})");
  bad(R"({"modalities":[{"n":3,"k":1}],"N":0})");
  bad(R"({"modalities":[{"n":3,"k":1}],"engine":"ablation","ablation_k":0})");
  bad(R"({"modalities":[{"n":3,"k":1}],"engine":"ablation","ablation_k":4})");
  bad(R"({"modalities":[{"n":3,"k":1}],"synth":{"separation":1.2}})");
}

TEST(ConfigParse, EngineAliasAndDirectionForms) {
  EXPECT_EQ(io::engine_from_string("baseline"), io::Engine::kAblation);

  EXPECT_EQ(io::parse_direction(io::json("3/2")).num, 3);
  EXPECT_EQ(io::parse_direction(io::json("3/2")).den, 2);
  EXPECT_EQ(io::parse_direction(io::json("2")).num, 2);
  EXPECT_EQ(io::parse_direction(io::json(2)).num, 2);
  EXPECT_EQ(io::parse_direction(io::json(2)).den, 1);
  const auto half = io::parse_direction(io::json(1.5));
  EXPECT_EQ(half.num, 3);
  EXPECT_EQ(half.den, 2);
  const auto tenth = io::parse_direction(io::json(0.1));
  EXPECT_EQ(mc::make_ratio(tenth.num, tenth.den), mc::exact_ratio(0.1));
  EXPECT_THROW(io::parse_direction(io::json("x/y")), mc::ConfigError);
  EXPECT_THROW(io::parse_direction(io::json(true)), mc::ConfigError);
}

TEST(ConfigParse, CanonicalFormAndHashAreStable) {
  const auto cfg = io::parse_config(io::json::parse(kFullConfig));
  const auto canon = io::canonical_config(cfg);
  EXPECT_EQ(canon, io::canonical_config(cfg));
  EXPECT_EQ(io::config_hash(cfg), io::config_hash(cfg));
  EXPECT_NE(canon.find("\"direction\":\"3/2\""), std::string::npos);

  auto bumped = cfg;
  bumped.seed += 1;
  EXPECT_NE(io::config_hash(cfg), io::config_hash(bumped));
  EXPECT_EQ(io::hex64(0xdeadbeefUL), "00000000deadbeef");
}

TEST(VoteIngest, ClassificationRows) {
  std::stringstream in(
      "{\"sample_id\":\"s1\",\"gt\":3,\"N\":100,\"counts\":{\"3\":97,\"1\":3}}\n"
      "\n"
      "{\"sample_id\":\"s2\",\"N\":100,\"counts\":{\"0\":100}}\n");
  const auto rows = io::read_classification_votes(in, 4);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].sample_id, "s1");
  ASSERT_TRUE(rows[0].ground_truth.has_value());
  EXPECT_EQ(*rows[0].ground_truth, 3);
  EXPECT_EQ(rows[0].votes.count_of(3), 97);
  EXPECT_EQ(rows[0].votes.count_of(1), 3);
  EXPECT_EQ(rows[0].votes.total, 100);
  EXPECT_FALSE(rows[1].ground_truth.has_value());
  const auto top = rows[0].votes.top_two();
  EXPECT_EQ(top.label_a, 3);
  EXPECT_EQ(top.count_b, 3);
}

TEST(VoteIngest, ClassificationErrorsCarryLineNumbers) {
  auto expect_line = [](const char* text, const char* needle) {
    std::stringstream in(text);
    try {
      io::read_classification_votes(in, 4);
      FAIL() << "expected DataError for: " << text;
    } catch (const mc::DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
          << e.what();
    }
  };
  expect_line(
      "{\"sample_id\":\"a\",\"N\":100,\"counts\":{\"0\":100}}\n"
      "{\"sample_id\":\"b\",\"N\":100,\"counts\":{\"0\":99}}\n",
      "line 2");
  expect_line("{\"sample_id\":\"a\",\"N\":10,\"counts\":{\"9\":10}}\n",
              "outside");
  expect_line("{\"sample_id\":\"a\",\"N\":10,\"counts\":{\"x\":10}}\n",
              "not a label");
  expect_line("{\"N\":10,\"counts\":{\"0\":10}}\n", "sample_id");
  expect_line("not json\n", "line 1");
}

TEST(VoteIngest, SegmentationFullAndCompactAgree) {
  std::stringstream full_in(
      "{\"idx\":42,\"gt\":1,\"N\":100,\"counts\":{\"1\":96,\"0\":4}}\n");
  std::stringstream compact_in(
      "{\"idx\":42,\"gt\":1,\"top\":[[1,96],[0,4]]}\n");
  const auto full = io::read_segmentation_votes(full_in, 2, 100);
  const auto compact = io::read_segmentation_votes(compact_in, 2, 100);
  ASSERT_EQ(full.size(), 1u);
  ASSERT_EQ(compact.size(), 1u);
  EXPECT_EQ(full[0].index, 42);
  EXPECT_FALSE(full[0].votes.partial);
  EXPECT_TRUE(compact[0].votes.partial);
  ASSERT_TRUE(compact[0].ground_truth.has_value());
  EXPECT_EQ(*compact[0].ground_truth, 1);

  const auto b_full = mc::clopper_pearson(full[0].votes, 0.01);
  const auto b_compact = mc::clopper_pearson(compact[0].votes, 0.01);
  EXPECT_DOUBLE_EQ(b_full.p_a_lower, b_compact.p_a_lower);
  EXPECT_DOUBLE_EQ(b_full.p_b_upper, b_compact.p_b_upper);
  EXPECT_EQ(b_full.label_a, b_compact.label_a);
}

TEST(VoteIngest, SegmentationCompactEdgeCases) {
  // The tail of the histogram may be unaccounted for.
  std::stringstream partial_in(
      "{\"idx\":0,\"gt\":0,\"top\":[[0,50],[2,30]]}\n");
  const auto rows = io::read_segmentation_votes(partial_in, 3, 100);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].votes.count_of(0), 50);
  EXPECT_EQ(rows[0].votes.total, 100);

  auto bad = [](const char* text) {
    std::stringstream in(text);
    EXPECT_THROW(io::read_segmentation_votes(in, 3, 100), mc::DataError)
        << text;
  };
  bad("{\"gt\":0,\"top\":[[0,50]]}\n");                    // no idx
  bad("{\"idx\":0,\"gt\":0}\n");                           // no votes
  bad("{\"idx\":0,\"counts\":{\"0\":9}}\n");               // full without N
  bad("{\"idx\":0,\"top\":[[0,5],[1,4],[2,1]]}\n");        // three pairs
  bad("{\"idx\":0,\"top\":[[0,4],[1,5]]}\n");              // out of order
  bad("{\"idx\":0,\"top\":[[0,60],[1,50]]}\n");            // sum over N
}

TEST(Emission, ProbabilityFormatting) {
  EXPECT_EQ(io::format_prob(0.5), "0.5");
  EXPECT_EQ(io::format_prob(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(io::format_prob(8.881784197e-16), "8.881784197e-16");
  EXPECT_EQ(io::prob_json(1.0 / 3.0).dump(), "0.333333333333");
}

TEST(Emission, CurveAndSweepWriters) {
  const std::vector<io::CurvePoint> curve{{0, 0, "certified_accuracy", 1.0},
                                          {1, 2, "iou", 0.25}};
  std::stringstream curve_out;
  io::write_curves_csv(curve_out, curve);
  EXPECT_EQ(curve_out.str(),
            "r_1,r_2,metric,value\n"
            "0,0,certified_accuracy,1\n"
            "1,2,iou,0.25\n");

  const std::vector<io::SweepPoint> sweep{{0.001, "certified_accuracy", 0.75}};
  std::stringstream sweep_out;
  io::write_sweep_csv(sweep_out, "alpha", sweep);
  EXPECT_EQ(sweep_out.str(),
            "alpha,metric,value\n"
            "0.001,certified_accuracy,0.75\n");
}

TEST(Emission, ListParsing) {
  const auto doubles = io::parse_double_list("0.001,0.01,0.05");
  ASSERT_EQ(doubles.size(), 3u);
  EXPECT_DOUBLE_EQ(doubles[1], 0.01);
  const auto longs = io::parse_long_list("100,1000");
  ASSERT_EQ(longs.size(), 2u);
  EXPECT_EQ(longs[1], 1000);
  EXPECT_THROW(io::parse_long_list("1.5"), mc::ConfigError);
  EXPECT_THROW(io::parse_double_list("abc"), mc::ConfigError);
}

TEST(PartialVotes, ValidateRelaxesToAtMost) {
  mc::VoteCounts votes;
  votes.total = 100;
  votes.num_classes = 3;
  votes.counts = {{0, 60}, {1, 20}};
  EXPECT_THROW(votes.validate(), mc::DataError);
  votes.partial = true;
  EXPECT_NO_THROW(votes.validate());
  votes.counts[1] = 50;  // now sums past the total
  EXPECT_THROW(votes.validate(), mc::DataError);
}
