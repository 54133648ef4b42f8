// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "aes3d/annotation.hpp"
#include "aes3d/error.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace aes3d;

namespace {

const std::string kHeader =
    "scene_id,view_id,total,composition,visual_elements,technical,originality,theme,emotion,gestalt,comprehensive\n";

ViewLevelAnnotation view(const std::string& scene, const std::string& id, double total, double attr) {
    ViewLevelAnnotation a;
    a.scene_id = scene;
    a.view_id = id;
    a.total = total;
    a.attributes.fill(attr);
    return a;
}

// Random CSV text plus an independent parse of it for brute-force checks.
std::string random_csv(std::mt19937_64& rng, std::size_t scenes) {
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::string text = kHeader;
    for (std::size_t s = 0; s < scenes; ++s) {
        const std::size_t views = 1 + rng() % 6;
        for (std::size_t v = 0; v < views; ++v) {
            text += fmt::format("scene{:03d},v{},{:.2f}", s, v, u(rng));
            for (int k = 0; k < 8; ++k) text += fmt::format(",{:.2f}", u(rng));
            text += "\n";
        }
    }
    return text;
}

} // namespace

TEST(Prompt, ExactTemplate) {
    EXPECT_EQ(build_attribute_prompt("composition"),
              "Rate the aesthetic quality of this image from the aspect of composition on a 0–100 scale. Output only one "
              "number.");
    EXPECT_NE(build_attribute_prompt("gestalt").find("aspect of gestalt on"), std::string::npos);
    EXPECT_THROW(build_attribute_prompt("depth_of_field"), DomainError);
}

TEST(Aggregate, Examples) {
    const std::vector<ViewLevelAnnotation> two{view("s", "a", 40, 0), view("s", "b", 60, 0)};
    EXPECT_DOUBLE_EQ(aggregate_scene_score(two, LabelVariant::Total).value, 0.5);
    const std::vector<ViewLevelAnnotation> one{view("s", "a", 37, 50)};
    EXPECT_DOUBLE_EQ(aggregate_scene_score(one, LabelVariant::Total).value, 0.37);
    EXPECT_DOUBLE_EQ(aggregate_scene_score(one, LabelVariant::Attr8).value, 0.5);
    EXPECT_EQ(aggregate_scene_score(one, LabelVariant::Attr8).view_count, 1u);
    EXPECT_THROW(aggregate_scene_score(std::span<const ViewLevelAnnotation>{}, LabelVariant::Total), DomainError);
}

TEST(Aggregate, PermutationInvariantAndNoDoubleNormalization) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<ViewLevelAnnotation> views;
        for (int v = 0; v < 5; ++v) views.push_back(view("s", std::to_string(v), 100.0 * u(rng), 100.0 * u(rng)));
        const double a = aggregate_scene_score(views, LabelVariant::Total).value;
        std::shuffle(views.begin(), views.end(), rng);
        EXPECT_NEAR(aggregate_scene_score(views, LabelVariant::Total).value, a, 1e-15);
        const double y = u(rng);
        const std::vector<ViewLevelAnnotation> single{view("s", "x", 100.0 * y, 0)};
        EXPECT_NEAR(aggregate_scene_score(single, LabelVariant::Total).value, y, 1e-15);
    }
}

TEST(GapStats, Examples) {
    const std::vector<std::vector<double>> scenes{{0.2, 0.5, 0.9}, {0.4}};
    const GapStats g = score_gap_stats(scenes);
    ASSERT_EQ(g.gaps.size(), 2u);
    EXPECT_NEAR(g.gaps[0], 0.7, 1e-15);
    EXPECT_EQ(g.gaps[1], 0.0);
    EXPECT_NEAR(g.max, 0.7, 1e-15);
    EXPECT_DOUBLE_EQ(g.frac_above_020, 0.5);
}

TEST(GapStats, FractionsMonotone) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        std::vector<std::vector<double>> scenes(20);
        for (auto& s : scenes) {
            s.resize(1 + rng() % 5);
            for (double& x : s) x = u(rng);
        }
        const GapStats g = score_gap_stats(scenes);
        EXPECT_LE(g.frac_above_030, g.frac_above_020);
        EXPECT_LE(g.median, g.p90);
        EXPECT_LE(g.p90, g.max);
    }
}

TEST(Percentile, LinearInterpolation) {
    const std::vector<double> v{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(interpolated_percentile(v, 50), 2.5);
    EXPECT_DOUBLE_EQ(interpolated_percentile(v, 90), 3.7);
    EXPECT_DOUBLE_EQ(interpolated_percentile(v, 100), 4.0);
}

TEST(AttributeCorrelations, DiagonalIdenticalAndAntitone) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::array<double, kAttributeCount>> rows(10);
    for (auto& r : rows) {
        for (auto& x : r) x = u(rng);
        r[1] = r[0];
        r[2] = -r[0];
        r[7] = 0.5;
    }
    const auto c = attribute_correlations(rows);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(c.pearson[i][i], 1.0, 1e-12);
    EXPECT_NEAR(c.pearson[0][1], 1.0, 1e-12);
    EXPECT_NEAR(c.spearman[0][1], 1.0, 1e-12);
    EXPECT_NEAR(c.pearson[0][2], -1.0, 1e-12);
    EXPECT_TRUE(c.zero_variance[7]);
    for (std::size_t i = 0; i < kAttributeCount; ++i) {
        EXPECT_EQ(c.pearson[7][i], 0.0);
        EXPECT_EQ(c.pearson[i][7], 0.0);
        for (std::size_t j = 0; j < kAttributeCount; ++j) EXPECT_EQ(c.pearson[i][j], c.pearson[j][i]);
    }
    rows.resize(2);
    EXPECT_THROW(attribute_correlations(rows), DomainError);
}

TEST(Consistency, Examples) {
    const std::vector<double> a{0.1, 0.4, 0.3, 0.8};
    const Consistency same = label_consistency(a, a);
    EXPECT_NEAR(same.pearson, 1.0, 1e-12);
    EXPECT_NEAR(same.spearman, 1.0, 1e-12);
    std::vector<double> shifted = a;
    for (double& x : shifted) x += 0.05;
    EXPECT_NEAR(label_consistency(a, shifted).pearson, 1.0, 1e-12);
}

TEST(Csv, RejectsBadRowsWithLineNumbers) {
    std::string text = kHeader.substr(0, kHeader.size() - 1) + ",text\n";
    text += "s1,v0,50,1,2,3,4,5,6,7,8\n";
    text += "s1,v1,50,1,2,3,4,5,6,7\n";        // line 3: missing attribute
    text += "s1,v2,150,1,2,3,4,5,6,7,8\n";     // line 4: out of range
    text += "s1,v3,abc,1,2,3,4,5,6,7,8\n";     // line 5: not a number
    text += "s2,v0,10,1,2,3,4,5,6,7,8,\"free, text\"\n";
    const AnnotationTable t = parse_annotation_csv(text);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(*t.rows[1].text, "free, text");
    ASSERT_EQ(t.rejected.size(), 3u);
    EXPECT_EQ(t.rejected[0].line, 3u);
    EXPECT_EQ(t.rejected[1].line, 4u);
    EXPECT_EQ(t.rejected[2].line, 5u);
}

TEST(Csv, TextFieldNeedsHeaderColumn) {
    const AnnotationTable t = parse_annotation_csv(kHeader + "s2,v0,10,1,2,3,4,5,6,7,8,extra\n");
    EXPECT_TRUE(t.rows.empty());
    ASSERT_EQ(t.rejected.size(), 1u);
    EXPECT_EQ(t.rejected[0].line, 2u);
}

TEST(Csv, BadHeaderThrows) {
    EXPECT_THROW(parse_annotation_csv("scene_id,view_id,total\ns,v,1\n"), ParseError);
    EXPECT_THROW(parse_annotation_csv(""), ParseError);
}

TEST(Csv, QuotedFields) {
    EXPECT_EQ(split_csv_record("a,\"b,c\",\"d\"\"e\""), (std::vector<std::string>{"a", "b,c", "d\"e"}));
}

TEST(Csv, FormatParseRoundTrip) {
    std::mt19937_64 rng(4);
    const AnnotationTable t = parse_annotation_csv(random_csv(rng, 12));
    const AnnotationTable back = parse_annotation_csv(format_annotation_csv(t.rows));
    ASSERT_EQ(back.rows.size(), t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].total, t.rows[i].total);
        EXPECT_EQ(back.rows[i].attributes, t.rows[i].attributes);
    }
}

TEST(Labels, JsonRoundTrip) {
    std::mt19937_64 rng(5);
    const LabelMap labels = build_labels(parse_annotation_csv(random_csv(rng, 8)).rows);
    const LabelMap back = labels_from_json(labels_to_json(labels));
    ASSERT_EQ(back.size(), labels.size());
    for (const auto& [id, e] : labels) {
        EXPECT_EQ(back.at(id).total, e.total);
        EXPECT_EQ(back.at(id).attr8, e.attr8);
        EXPECT_EQ(back.at(id).view_count, e.view_count);
    }
}

TEST(Summary, MatchesBruteForceFromRawCsv) {
    std::mt19937_64 rng(6);
    const std::string text = random_csv(rng, 25);
    // Independent re-parse with stringstreams.
    std::map<std::string, std::vector<double>> totals, attrs;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::size_t views = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        double attr_sum = 0.0;
        for (int k = 3; k < 11; ++k) attr_sum += std::stod(cells[static_cast<std::size_t>(k)]);
        totals[cells[0]].push_back(std::stod(cells[2]) / 100.0);
        attrs[cells[0]].push_back(attr_sum / 8.0 / 100.0);
        ++views;
    }
    std::vector<double> labels;
    for (const auto& [id, v] : totals) labels.push_back(aes3d::oracle::mean(v));
    const double m = aes3d::oracle::mean(labels);
    double var = 0.0;
    for (double x : labels) var += (x - m) * (x - m);
    var /= static_cast<double>(labels.size());
    std::vector<double> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);

    const AnnotationReport r = annotation_report(parse_annotation_csv(text));
    EXPECT_EQ(r.total_summary.scene_count, totals.size());
    EXPECT_EQ(r.total_summary.view_count, views);
    EXPECT_NEAR(r.total_summary.label_mean, m, 1e-12);
    EXPECT_NEAR(r.total_summary.label_median, median, 1e-12);
    EXPECT_NEAR(r.total_summary.label_std, std::sqrt(var), 1e-12);
    std::vector<double> attr_labels;
    for (const auto& [id, v] : attrs) attr_labels.push_back(aes3d::oracle::mean(v));
    EXPECT_NEAR(r.attr8_summary.label_mean, aes3d::oracle::mean(attr_labels), 1e-12);
}

TEST(LabelVariantNames, RoundTrip) {
    EXPECT_EQ(label_variant_from_string(to_string(LabelVariant::Total)), LabelVariant::Total);
    EXPECT_EQ(label_variant_from_string(to_string(LabelVariant::Attr8)), LabelVariant::Attr8);
}
