#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "ecrt/core.hpp"
#include "ecrt/records.hpp"
#include "ecrt/rng.hpp"
#include "gtest/gtest.h"
#include "oracles.hpp"

namespace ecrt {
namespace {

TEST(ValidateObservation, WellFormed) {
    const Observation obs = validate_observation({0.1, 2.0, {0, 0, 0}}, 3);
    EXPECT_EQ(obs.x, 0.1);
    EXPECT_EQ(obs.y, 2.0);
    EXPECT_EQ(obs.dim(), 3u);
}

TEST(ValidateObservation, DimensionMismatch) {
    EXPECT_THROW(validate_observation({0.1, 2.0, {0, 0}}, 3), DimensionMismatch);
}

TEST(ValidateObservation, NonFinite) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_THROW(validate_observation({nan, 2.0, {0, 0, 0}}, 3), NonFiniteValue);
    EXPECT_THROW(validate_observation({0.0, inf, {0, 0, 0}}, 3), NonFiniteValue);
    EXPECT_THROW(validate_observation({0.0, 1.0, {0, nan, 0}}, 3), NonFiniteValue);
}

TEST(VilleThreshold, Reciprocal) {
    EXPECT_DOUBLE_EQ(ville_threshold(0.05), 20.0);
    EXPECT_DOUBLE_EQ(ville_threshold(0.01), 100.0);
    EXPECT_THROW(ville_threshold(1.5), DomainError);
    EXPECT_THROW(ville_threshold(0.0), DomainError);
    EXPECT_THROW(ville_threshold(1.0), DomainError);
}

TEST(Decide, ThresholdBoundary) {
    EXPECT_EQ(decide(20.0, 0.05), Decision::rejected);
    EXPECT_EQ(decide(19.99, 0.05), Decision::not_rejected);
    EXPECT_EQ(decide(20.0, 0.01), Decision::not_rejected);
}

TEST(TestConfig, Validation) {
    TestConfig ok;
    EXPECT_NO_THROW(ok.validate());
    auto bad = [](auto mutate) {
        TestConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TestConfig& c) { c.alpha = 1.0; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.batch_sizes = {}; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.batch_sizes = {2, 2}; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.batch_sizes = {0}; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.k_derandomize = 0; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.grid_size = 1; }).validate(), DomainError);
    EXPECT_THROW(bad([](TestConfig& c) { c.score_magnitude = 1.5; }).validate(), DomainError);
    EXPECT_EQ(ok.max_batch(), 10);
}

TEST(TestConfig, JsonRoundTripAndUnknownKeys) {
    TestConfig c;
    c.alpha = 0.01;
    c.batch_sizes = {5, 10, 20};
    c.score_kind = ScoreKind::tanh;
    c.seed = 0xffffffffffffffffULL;
    EXPECT_EQ(test_config_from_json(to_json(c)), c);
    EXPECT_EQ(config_hash(c), config_hash(test_config_from_json(to_json(c))));

    auto j = to_json(c);
    j["batchsize"] = 3;
    EXPECT_THROW(test_config_from_json(j), DomainError);
    EXPECT_THROW(test_config_from_json(nlohmann::json{{"score_kind", "linear"}}), DomainError);
}

TEST(Rng, SameSeedAndStreamReplays) {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, StateRestoreResumesMidPair) {
    RngStream a(1, 2);
    a.normal();  // leaves a cached variate
    RngStream b(a.state());
    for (int i = 0; i < 10; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, DistinctStreamsLookIndependent) {
    RngStream a(42, 0), b(42, 1);
    std::vector<double> xa, xb;
    for (int i = 0; i < 20000; ++i) {
        xa.push_back(a.normal());
        xb.push_back(b.normal());
    }
    EXPECT_NE(xa[0], xb[0]);
    double cov = 0.0;
    for (int i = 0; i < 20000; ++i) cov += xa[i] * xb[i];
    cov /= 20000;
    // sd of the sample cross-moment is 1/sqrt(n) ~ 0.007
    EXPECT_LT(std::abs(cov), 0.035);
}

TEST(Rng, UniformAndNormalMoments) {
    RngStream r(9, 9);
    std::vector<double> u, z;
    for (int i = 0; i < 100000; ++i) {
        const double v = r.uniform();
        ASSERT_GT(v, 0.0);
        ASSERT_LT(v, 1.0);
        u.push_back(v);
        z.push_back(r.normal());
    }
    EXPECT_NEAR(oracle::mean(u), 0.5, 0.005);
    EXPECT_NEAR(oracle::mean(z), 0.0, 0.01);
    double v2 = 0.0;
    for (double x : z) v2 += x * x;
    EXPECT_NEAR(v2 / z.size(), 1.0, 0.02);
}

TEST(Records, ParseAndReject) {
    const RawRecord r = parse_record(R"({"x": 0.5, "y": -1, "z": [1, 2.5]})");
    EXPECT_EQ(r.x, 0.5);
    EXPECT_EQ(r.y, -1.0);
    EXPECT_EQ(r.z, (std::vector<double>{1, 2.5}));
    EXPECT_THROW(parse_record(R"({"x": 0.5, "z": [1]})"), Error);
    EXPECT_NO_THROW(parse_record(R"({"x": 0.5, "z": [1]})", false));
    EXPECT_THROW(parse_record(R"({"x": "a", "y": 1, "z": [1]})"), Error);
    EXPECT_THROW(parse_record("not json"), Error);
}

TEST(Records, ReaderReportsLineNumber) {
    std::istringstream in(
        "{\"x\":1,\"y\":2,\"z\":[0,1]}\n"
        "\n"
        "{\"x\":1,\"y\":2,\"z\":[0]}\n");
    RecordReader reader(in, std::nullopt);
    ASSERT_TRUE(reader.next().has_value());
    EXPECT_EQ(reader.dim(), 2u);
    try {
        reader.next();
        FAIL() << "expected a RecordError";
    } catch (const RecordError& e) {
        EXPECT_EQ(e.line_no, 3);
    }
}

TEST(Records, WriteThenRead) {
    std::ostringstream out;
    const Observation a{0.25, -3.5, {1.0, 2.0}}, b{1e-17, 4.0, {0.1, -0.3}};
    write_record(out, a);
    write_record(out, b);
    std::istringstream in(out.str());
    const auto got = read_records(in, 2);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0], a);
    EXPECT_EQ(got[1], b);
}

TEST(Records, SourceIsExhaustible) {
    std::vector<Observation> data{{1, 2, {3}}, {4, 5, {6}}};
    auto src = source_from(data);
    EXPECT_EQ(src()->x, 1);
    EXPECT_EQ(src()->x, 4);
    EXPECT_FALSE(src().has_value());
}

}  // namespace
}  // namespace ecrt
