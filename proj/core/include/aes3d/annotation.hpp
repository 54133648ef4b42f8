// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aes3d {

inline constexpr std::size_t kAttributeCount = 8;
inline constexpr std::array<std::string_view, kAttributeCount> kAttributeNames = {
    "composition", "visual_elements", "technical", "originality", "theme", "emotion", "gestalt", "comprehensive"};

enum class LabelVariant { Total, Attr8 };

std::string to_string(LabelVariant v);
LabelVariant label_variant_from_string(const std::string& s);

/// One annotated rendering. Scores are on the raw 0-100 scale.
struct ViewLevelAnnotation {
    std::string scene_id;
    std::string view_id;
    double total = 0.0;
    std::array<double, kAttributeCount> attributes{};
    std::optional<std::string> text;

    double attribute_mean() const;
    /// The view's score for `variant` normalized to [0, 1].
    double normalized(LabelVariant variant) const;
    void validate() const;
};

struct SceneLabel {
    std::string scene_id;
    double value = 0.0;
    LabelVariant variant = LabelVariant::Total;
    std::size_t view_count = 0;
};

/// Throws DomainError for names outside the 8 canonical attributes.
std::string build_attribute_prompt(std::string_view attr_name);

struct CsvRowError {
    std::size_t line = 0;
    std::string message;
};

struct AnnotationTable {
    std::vector<ViewLevelAnnotation> rows;
    std::vector<CsvRowError> rejected;
};

/// Parses the annotation CSV. Malformed rows are rejected with their 1-based line number
/// instead of aborting; a missing or wrong header throws ParseError.
AnnotationTable parse_annotation_csv(std::string_view text);
AnnotationTable load_annotation_csv(const std::filesystem::path& path);
std::string format_annotation_csv(std::span<const ViewLevelAnnotation> rows);

/// Splits one CSV record honoring double-quoted fields.
std::vector<std::string> split_csv_record(std::string_view line);

SceneLabel aggregate_scene_score(std::span<const ViewLevelAnnotation> views, LabelVariant variant);

/// Annotations grouped by scene_id, scenes in lexicographic order, views in file order.
std::map<std::string, std::vector<ViewLevelAnnotation>> group_by_scene(std::span<const ViewLevelAnnotation> rows);

struct LabelEntry {
    double total = 0.0;
    double attr8 = 0.0;
    std::size_t view_count = 0;

    double get(LabelVariant v) const { return v == LabelVariant::Total ? total : attr8; }
};
using LabelMap = std::map<std::string, LabelEntry>;

LabelMap build_labels(std::span<const ViewLevelAnnotation> rows);
nlohmann::json labels_to_json(const LabelMap& labels);
LabelMap labels_from_json(const nlohmann::json& j);

/// Linear-interpolation percentile, q in [0, 100].
double interpolated_percentile(std::span<const double> values, double q);

struct GapStats {
    std::vector<double> gaps;
    double mean = 0.0;
    double median = 0.0;
    double p90 = 0.0;
    double max = 0.0;
    double frac_above_020 = 0.0;
    double frac_above_030 = 0.0;

    nlohmann::json to_json() const;
};

/// Per-scene max - min of normalized view scores, then summaries across scenes.
GapStats score_gap_stats(std::span<const std::vector<double>> per_scene_view_scores);

struct CorrelationMatrices {
    std::array<std::array<double, kAttributeCount>, kAttributeCount> pearson{};
    std::array<std::array<double, kAttributeCount>, kAttributeCount> spearman{};
    std::array<bool, kAttributeCount> zero_variance{};

    nlohmann::json to_json() const;
};

/// Rows are scenes, columns the 8 attribute means. Needs at least 3 scenes.
CorrelationMatrices attribute_correlations(std::span<const std::array<double, kAttributeCount>> scene_attributes);

/// Scene-level mean of each attribute over views, normalized to [0, 1].
std::array<double, kAttributeCount> scene_attribute_means(std::span<const ViewLevelAnnotation> views);

struct Consistency {
    double pearson = 0.0;
    double spearman = 0.0;
};

Consistency label_consistency(std::span<const double> total, std::span<const double> attr8);

struct DatasetSummary {
    std::size_t scene_count = 0;
    std::size_t view_count = 0;
    double label_mean = 0.0;
    double label_median = 0.0;
    double label_std = 0.0; // population
    LabelVariant variant = LabelVariant::Total;

    nlohmann::json to_json() const;
};

DatasetSummary summarize_labels(const LabelMap& labels, LabelVariant variant);

/// The full statistics block reported by the annotate command.
struct AnnotationReport {
    DatasetSummary total_summary;
    DatasetSummary attr8_summary;
    GapStats gap_total;
    GapStats gap_attr8;
    CorrelationMatrices correlations;
    Consistency consistency;
    std::size_t rejected_rows = 0;

    nlohmann::json to_json() const;
};

AnnotationReport annotation_report(const AnnotationTable& table);

} // namespace aes3d
