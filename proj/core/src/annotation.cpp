// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/annotation.hpp"

#include "aes3d/error.hpp"
#include "aes3d/evaluation.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace aes3d {

std::string to_string(LabelVariant v) { return v == LabelVariant::Total ? "total" : "attr8"; }

LabelVariant label_variant_from_string(const std::string& s) {
    if (s == "total") return LabelVariant::Total;
    if (s == "attr8") return LabelVariant::Attr8;
    throw ConfigError(fmt::format("unknown label variant '{}'", s));
}

double ViewLevelAnnotation::attribute_mean() const {
    double s = 0.0;
    for (double a : attributes) s += a;
    return s / static_cast<double>(kAttributeCount);
}

double ViewLevelAnnotation::normalized(LabelVariant variant) const {
    return (variant == LabelVariant::Total ? total : attribute_mean()) / 100.0;
}

void ViewLevelAnnotation::validate() const {
    if (scene_id.empty()) throw ValidationError("annotation has an empty scene_id");
    auto check = [&](double v, std::string_view field) {
        if (!std::isfinite(v) || v < 0.0 || v > 100.0) {
            throw ValidationError(fmt::format("{}/{}: {} = {} is outside [0, 100]", scene_id, view_id, field, v));
        }
    };
    check(total, "total");
    for (std::size_t a = 0; a < kAttributeCount; ++a) check(attributes[a], kAttributeNames[a]);
}

std::string build_attribute_prompt(std::string_view attr_name) {
    if (std::find(kAttributeNames.begin(), kAttributeNames.end(), attr_name) == kAttributeNames.end()) {
        throw DomainError(fmt::format("'{}' is not a canonical aesthetic attribute", attr_name));
    }
    return fmt::format(
        "Rate the aesthetic quality of this image from the aspect of {} on a 0–100 scale. Output only one number.",
        attr_name);
}

std::vector<std::string> split_csv_record(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", 0);
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

constexpr std::size_t kFixedColumns = 3 + kAttributeCount;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_score(std::string_view field, std::string_view column) {
    field = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ValidationError(fmt::format("column '{}': '{}' is not a decimal number", column, field));
    }
    return v;
}

std::vector<std::string> expected_header() {
    std::vector<std::string> h = {"scene_id", "view_id", "total"};
    for (auto name : kAttributeNames) h.emplace_back(name);
    return h;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace

AnnotationTable parse_annotation_csv(std::string_view text) {
    AnnotationTable table;
    std::size_t line_no = 0;
    bool has_text = false;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
        if (trim(line).empty()) {
            if (end >= text.size()) break;
            continue;
        }
        if (!header_seen) {
            auto cols = split_csv_record(trim(line));
            for (auto& c : cols) c = std::string(trim(c));
            const auto expect = expected_header();
            has_text = cols.size() == kFixedColumns + 1 && cols.back() == "text";
            if (!has_text) {
                if (cols.size() != kFixedColumns) {
                    throw ParseError(fmt::format("annotation header has {} columns, expected {} or {}", cols.size(),
                                                 kFixedColumns, kFixedColumns + 1),
                                     line_no);
                }
            }
            if (!std::equal(expect.begin(), expect.end(), cols.begin())) {
                throw ParseError("annotation header does not match the expected column names", line_no);
            }
            header_seen = true;
            continue;
        }
        try {
            const auto fields = split_csv_record(line);
            const bool ok_size = fields.size() == kFixedColumns || (has_text && fields.size() == kFixedColumns + 1);
            if (!ok_size) {
                throw ValidationError(fmt::format("expected {} fields, found {}",
                                                  has_text ? kFixedColumns + 1 : kFixedColumns, fields.size()));
            }
            ViewLevelAnnotation row;
            row.scene_id = std::string(trim(fields[0]));
            row.view_id = std::string(trim(fields[1]));
            row.total = parse_score(fields[2], "total");
            for (std::size_t a = 0; a < kAttributeCount; ++a) {
                row.attributes[a] = parse_score(fields[3 + a], kAttributeNames[a]);
            }
            if (fields.size() == kFixedColumns + 1 && !fields.back().empty()) row.text = fields.back();
            row.validate();
            table.rows.push_back(std::move(row));
        } catch (const Error& e) {
            spdlog::warn("annotation line {} rejected: {}", line_no, e.what());
            table.rejected.push_back({line_no, e.what()});
        }
        if (end >= text.size()) break;
    }
    if (!header_seen) throw ParseError("annotation CSV has no header", line_no);
    return table;
}

AnnotationTable load_annotation_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(fmt::format("cannot open {}", path.string()), 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_annotation_csv(ss.str());
}

std::string format_annotation_csv(std::span<const ViewLevelAnnotation> rows) {
    std::string out;
    for (const auto& h : expected_header()) out += h + ",";
    out += "text\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{}", csv_quote(r.scene_id), csv_quote(r.view_id), r.total);
        for (double a : r.attributes) out += fmt::format(",{}", a);
        out += "," + csv_quote(r.text.value_or("")) + "\n";
    }
    return out;
}

SceneLabel aggregate_scene_score(std::span<const ViewLevelAnnotation> views, LabelVariant variant) {
    if (views.empty()) throw DomainError("aggregate_scene_score: scene has no annotated views");
    double s = 0.0;
    for (const auto& v : views) s += variant == LabelVariant::Total ? v.total : v.attribute_mean();
    SceneLabel label;
    label.scene_id = views.front().scene_id;
    label.value = s / static_cast<double>(views.size()) / 100.0;
    label.variant = variant;
    label.view_count = views.size();
    return label;
}

std::map<std::string, std::vector<ViewLevelAnnotation>> group_by_scene(std::span<const ViewLevelAnnotation> rows) {
    std::map<std::string, std::vector<ViewLevelAnnotation>> out;
    for (const auto& r : rows) out[r.scene_id].push_back(r);
    return out;
}

LabelMap build_labels(std::span<const ViewLevelAnnotation> rows) {
    LabelMap labels;
    for (const auto& [id, views] : group_by_scene(rows)) {
        LabelEntry e;
        e.total = aggregate_scene_score(views, LabelVariant::Total).value;
        e.attr8 = aggregate_scene_score(views, LabelVariant::Attr8).value;
        e.view_count = views.size();
        labels[id] = e;
    }
    return labels;
}

nlohmann::json labels_to_json(const LabelMap& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, e] : labels) j[id] = {{"total", e.total}, {"attr8", e.attr8}, {"view_count", e.view_count}};
    return j;
}

LabelMap labels_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("label file must be a JSON object keyed by scene_id");
    LabelMap labels;
    for (const auto& [id, v] : j.items()) {
        try {
            LabelEntry e;
            e.total = v.at("total").get<double>();
            e.attr8 = v.at("attr8").get<double>();
            e.view_count = v.at("view_count").get<std::size_t>();
            for (double x : {e.total, e.attr8}) {
                if (!(x >= 0.0 && x <= 1.0)) throw SchemaError(fmt::format("label {} is outside [0, 1]", x));
            }
            if (e.view_count < 1) throw SchemaError("view_count must be at least 1");
            labels[id] = e;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(fmt::format("label entry '{}': {}", id, e.what()));
        }
    }
    return labels;
}

double interpolated_percentile(std::span<const double> values, double q) {
    if (values.empty()) throw DomainError("percentile of an empty set");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

nlohmann::json GapStats::to_json() const {
    return {{"scenes", gaps.size()}, {"mean", mean},   {"median", median},
            {"p90", p90},            {"max", max},     {"frac_above_0.20", frac_above_020},
            {"frac_above_0.30", frac_above_030}};
}

GapStats score_gap_stats(std::span<const std::vector<double>> per_scene_view_scores) {
    GapStats st;
    for (const auto& views : per_scene_view_scores) {
        if (views.empty()) throw DomainError("score_gap_stats: a scene has no views");
        const auto [lo, hi] = std::minmax_element(views.begin(), views.end());
        st.gaps.push_back(*hi - *lo);
    }
    if (st.gaps.empty()) return st;
    const auto n = static_cast<double>(st.gaps.size());
    double sum = 0.0;
    std::size_t above20 = 0, above30 = 0;
    for (double g : st.gaps) {
        sum += g;
        above20 += g > 0.20 ? 1 : 0;
        above30 += g > 0.30 ? 1 : 0;
    }
    st.mean = sum / n;
    st.median = interpolated_percentile(st.gaps, 50.0);
    st.p90 = interpolated_percentile(st.gaps, 90.0);
    st.max = *std::max_element(st.gaps.begin(), st.gaps.end());
    st.frac_above_020 = static_cast<double>(above20) / n;
    st.frac_above_030 = static_cast<double>(above30) / n;
    return st;
}

namespace {

nlohmann::json matrix_json(const std::array<std::array<double, kAttributeCount>, kAttributeCount>& m) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : m) j.push_back(row);
    return j;
}

} // namespace

nlohmann::json CorrelationMatrices::to_json() const {
    return {{"attributes", kAttributeNames},
            {"pearson", matrix_json(pearson)},
            {"spearman", matrix_json(spearman)},
            {"zero_variance", zero_variance}};
}

CorrelationMatrices attribute_correlations(std::span<const std::array<double, kAttributeCount>> scene_attributes) {
    if (scene_attributes.size() < 3) throw DomainError("attribute_correlations needs at least 3 scenes");
    std::array<std::vector<double>, kAttributeCount> cols;
    for (const auto& row : scene_attributes) {
        for (std::size_t a = 0; a < kAttributeCount; ++a) cols[a].push_back(row[a]);
    }
    CorrelationMatrices out;
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        out.zero_variance[a] = std::all_of(cols[a].begin(), cols[a].end(), [&](double v) { return v == cols[a][0]; });
    }
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        for (std::size_t b = 0; b < kAttributeCount; ++b) {
            if (out.zero_variance[a] || out.zero_variance[b]) continue;
            if (a == b) {
                out.pearson[a][b] = out.spearman[a][b] = 1.0;
                continue;
            }
            out.pearson[a][b] = pearson(cols[a], cols[b]).value;
            out.spearman[a][b] = spearman(cols[a], cols[b]).value;
        }
    }
    return out;
}

std::array<double, kAttributeCount> scene_attribute_means(std::span<const ViewLevelAnnotation> views) {
    if (views.empty()) throw DomainError("scene_attribute_means: no views");
    std::array<double, kAttributeCount> m{};
    for (const auto& v : views) {
        for (std::size_t a = 0; a < kAttributeCount; ++a) m[a] += v.attributes[a];
    }
    for (double& x : m) x /= static_cast<double>(views.size()) * 100.0;
    return m;
}

Consistency label_consistency(std::span<const double> total, std::span<const double> attr8) {
    return {pearson(total, attr8).value, spearman(total, attr8).value};
}

nlohmann::json DatasetSummary::to_json() const {
    return {{"variant", to_string(variant)}, {"scenes", scene_count},   {"views", view_count},
            {"label_mean", label_mean},      {"label_median", label_median}, {"label_std", label_std}};
}

DatasetSummary summarize_labels(const LabelMap& labels, LabelVariant variant) {
    DatasetSummary s;
    s.variant = variant;
    s.scene_count = labels.size();
    if (labels.empty()) return s;
    std::vector<double> values;
    for (const auto& [id, e] : labels) {
        s.view_count += e.view_count;
        values.push_back(e.get(variant));
    }
    const auto n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.label_mean = sum / n;
    double sq = 0.0;
    for (double v : values) sq += (v - s.label_mean) * (v - s.label_mean);
    s.label_std = std::sqrt(sq / n);
    s.label_median = interpolated_percentile(values, 50.0);
    return s;
}

nlohmann::json AnnotationReport::to_json() const {
    return {{"summary_total", total_summary.to_json()},
            {"summary_attr8", attr8_summary.to_json()},
            {"gap_total", gap_total.to_json()},
            {"gap_attr8", gap_attr8.to_json()},
            {"attribute_correlations", correlations.to_json()},
            {"label_consistency", {{"pearson", consistency.pearson}, {"spearman", consistency.spearman}}},
            {"rejected_rows", rejected_rows}};
}

AnnotationReport annotation_report(const AnnotationTable& table) {
    AnnotationReport r;
    r.rejected_rows = table.rejected.size();
    const LabelMap labels = build_labels(table.rows);
    r.total_summary = summarize_labels(labels, LabelVariant::Total);
    r.attr8_summary = summarize_labels(labels, LabelVariant::Attr8);

    std::vector<std::vector<double>> gap_total, gap_attr8;
    std::vector<std::array<double, kAttributeCount>> attrs;
    std::vector<double> totals, attr8s;
    for (const auto& [id, views] : group_by_scene(table.rows)) {
        auto& t = gap_total.emplace_back();
        auto& a = gap_attr8.emplace_back();
        for (const auto& v : views) {
            t.push_back(v.normalized(LabelVariant::Total));
            a.push_back(v.normalized(LabelVariant::Attr8));
        }
        attrs.push_back(scene_attribute_means(views));
        totals.push_back(labels.at(id).total);
        attr8s.push_back(labels.at(id).attr8);
    }
    r.gap_total = score_gap_stats(gap_total);
    r.gap_attr8 = score_gap_stats(gap_attr8);
    if (attrs.size() >= 3) r.correlations = attribute_correlations(attrs);
    if (totals.size() >= 2) r.consistency = label_consistency(totals, attr8s);
    return r;
}

} // namespace aes3d
