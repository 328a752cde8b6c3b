#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crystalseg/metrics.hpp"
#include "crystalseg/util.hpp"
#include "oracles.hpp"

using namespace crystalseg;

TEST_CASE("dice spot values") {
    ConfusionCounts c;
    c.tp = 2;
    c.fp = 1;
    c.fn = 1;
    CHECK(dice(c) == Catch::Approx(2.0 / 3.0).margin(1e-12));

    ConfusionCounts identity;
    identity.tp = 10;
    CHECK(dice(identity) == 1.0);

    ConfusionCounts disjoint;
    disjoint.fp = 5;
    disjoint.fn = 5;
    CHECK(dice(disjoint) == 0.0);

    ConfusionCounts empty;
    bool vacuous = false;
    CHECK(dice(empty, &vacuous) == 1.0);
    CHECK(vacuous);
}

TEST_CASE("undefined ratios come back NaN and print as 'undefined'") {
    ConfusionCounts none;
    none.tn = 4;
    CHECK(std::isnan(precision(none)));
    CHECK(std::isnan(recall(none)));
    CHECK(format_double(precision(none)) == "undefined");
    CHECK(parse_double("undefined") != parse_double("undefined"));  // NaN round-trip
}

TEST_CASE("mask tallies agree with the per-pixel oracle") {
    SplitMix64 rng{314};
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryMask pred = oracle::random_mask(32, 32, rng.uniform(), rng);
        const BinaryMask truth = oracle::random_mask(32, 32, rng.uniform(), rng);
        const ConfusionCounts got = mask_counts(pred, truth);
        const ConfusionCounts want = oracle::tally_direct(pred, truth);
        CHECK(got.tp == want.tp);
        CHECK(got.fp == want.fp);
        CHECK(got.fn == want.fn);
        CHECK(got.tn == want.tn);
    }
    BinaryMask small;
    small.width = 2;
    small.height = 2;
    small.bits = {0, 0, 0, 0};
    const BinaryMask big = oracle::random_mask(3, 3, 0.5, rng);
    CHECK_THROWS_AS(mask_counts(small, big), std::invalid_argument);
}

TEST_CASE("precision/recall curves demand ascending thresholds") {
    ProbMap prob;
    prob.width = 4;
    prob.height = 1;
    prob.probs = {0.1, 0.4, 0.6, 0.9};
    BinaryMask truth;
    truth.width = 4;
    truth.height = 1;
    truth.bits = {0, 0, 1, 1};

    const auto curve = pr_curve(prob, truth, {0.0, 0.5, 1.0});
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].recall == 1.0);       // everything predicted positive
    CHECK(curve[0].precision == 0.5);
    CHECK(curve[1].precision == 1.0);    // {0.6, 0.9} both true
    CHECK(curve[1].recall == 1.0);
    CHECK(curve[2].recall == 0.0);       // only p >= 1.0 predicted: {} ... or {0.9}? strictly below
    // Recall never increases as the threshold rises.
    for (std::size_t i = 1; i < curve.size(); ++i)
        CHECK(curve[i].recall <= curve[i - 1].recall);

    CHECK_THROWS_AS(pr_curve(prob, truth, {0.5, 0.4}), std::invalid_argument);
    CHECK_THROWS_AS(pr_curve(prob, truth, {}), std::invalid_argument);
}

TEST_CASE("confusion matrix counts land in [true][predicted]") {
    std::vector<std::pair<ClassLabel, ClassLabel>> pairs = {
        {ClassLabel::StackingFault, ClassLabel::StackingFault},
        {ClassLabel::StackingFault, ClassLabel::Misoriented},
        {ClassLabel::NoStackingFault, ClassLabel::NoStackingFault},
    };
    const ConfusionMatrix cm = confusion_matrix(pairs);
    CHECK(cm.cells[0][0] == 1);
    CHECK(cm.cells[0][2] == 1);
    CHECK(cm.cells[1][1] == 1);
    CHECK(cm.row_sum(0) == 2);
    const auto norm = cm.row_normalized();
    CHECK(norm[0][0] == Catch::Approx(0.5));
    CHECK(norm[0][2] == Catch::Approx(0.5));

    CHECK_THROWS_AS(confusion_matrix({}), std::invalid_argument);
}

TEST_CASE("balanced accuracy averages only the classes that appear") {
    std::vector<std::pair<ClassLabel, ClassLabel>> pairs;
    // Class 0: 3 of 4 correct. Class 1: 1 of 2 correct. Others absent.
    for (int i = 0; i < 3; ++i)
        pairs.push_back({ClassLabel::StackingFault, ClassLabel::StackingFault});
    pairs.push_back({ClassLabel::StackingFault, ClassLabel::NoStackingFault});
    pairs.push_back({ClassLabel::NoStackingFault, ClassLabel::NoStackingFault});
    pairs.push_back({ClassLabel::NoStackingFault, ClassLabel::StackingFault});
    const ConfusionMatrix cm = confusion_matrix(pairs);
    CHECK(balanced_accuracy(cm) == Catch::Approx((0.75 + 0.5) / 2.0));
}

TEST_CASE("population statistics follow the class taxonomy") {
    std::vector<ClassLabel> labels = {
        ClassLabel::StackingFault,   ClassLabel::NoStackingFault, ClassLabel::Misoriented,
        ClassLabel::Misoriented,     ClassLabel::Agglomeration,   ClassLabel::NoParticle,
        ClassLabel::NoParticle,
    };
    const PopulationStats st = population_stats(labels);
    CHECK(st.fraction_oriented == Catch::Approx(2.0 / 4.0));
    CHECK(st.fraction_faulted_of_oriented == Catch::Approx(1.0 / 2.0));

    const PopulationStats none = population_stats({ClassLabel::NoParticle});
    CHECK(std::isnan(none.fraction_oriented));
    CHECK(std::isnan(none.fraction_faulted_of_oriented));

    CHECK_THROWS_AS(population_stats({}), std::invalid_argument);
}
