// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/evaluation.hpp"

#include "aes3d/error.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace aes3d {

namespace {

void require_same_length(std::span<const double> x, std::span<const double> y, std::size_t min_len, const char* op) {
    if (x.size() != y.size()) throw ContractError(fmt::format("{}: inputs differ in length", op));
    if (x.size() < min_len) throw DomainError(fmt::format("{}: needs at least {} samples", op, min_len));
}

double mean_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

} // namespace

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, 2, "pearson");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, 2, "spearman");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

namespace {

// Merge sort counting inversions (pairs out of order) in v.
std::uint64_t count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = count_swaps(v, buf, lo, mid) + count_swaps(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            buf[k++] = v[j++];
            swaps += mid - i;
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

// Sum over tie groups of t (t - 1) / 2 for a sorted sequence.
std::uint64_t tied_pairs_sorted(const std::vector<double>& v) {
    std::uint64_t total = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i + 1;
        while (j < v.size() && v[j] == v[i]) ++j;
        const std::uint64_t t = j - i;
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

} // namespace

Correlation kendall(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, 2, "kendall");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });
    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    std::uint64_t ties_x = 0, ties_xy = 0;
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i + 1;
            while (j < n && x[order[j]] == x[order[i]]) ++j;
            const std::uint64_t t = j - i;
            ties_x += t * (t - 1) / 2;
            std::size_t a = i;
            while (a < j) {
                std::size_t b = a + 1;
                while (b < j && y[order[b]] == y[order[a]]) ++b;
                const std::uint64_t u = b - a;
                ties_xy += u * (u - 1) / 2;
                a = b;
            }
            i = j;
        }
    }
    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    const std::uint64_t swaps = count_swaps(ys, buf, 0, n);
    const std::uint64_t ties_y = tied_pairs_sorted(ys);

    const double denom_x = static_cast<double>(n0 - ties_x);
    const double denom_y = static_cast<double>(n0 - ties_y);
    if (denom_x <= 0.0 || denom_y <= 0.0) return {0.0, true};
    // concordant - discordant = n0 - tx - ty + txy - 2 * discordant
    const double num = static_cast<double>(n0) - static_cast<double>(ties_x) - static_cast<double>(ties_y) +
                       static_cast<double>(ties_xy) - 2.0 * static_cast<double>(swaps);
    return {std::clamp(num / std::sqrt(denom_x * denom_y), -1.0, 1.0), false};
}

double logistic4(double x, const std::array<double, 4>& beta) {
    return beta[0] * (0.5 - 1.0 / (1.0 + std::exp(beta[1] * (x - beta[2])))) + beta[3];
}

namespace {

struct LogisticResidual {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    std::span<const double> x;
    std::span<const double> y;

    int inputs() const { return 4; }
    int values() const { return static_cast<int>(x.size()); }

    int operator()(const Eigen::VectorXd& b, Eigen::VectorXd& f) const {
        for (std::size_t i = 0; i < x.size(); ++i) {
            f[static_cast<Eigen::Index>(i)] = logistic4(x[i], {b[0], b[1], b[2], b[3]}) - y[i];
        }
        return 0;
    }

    int df(const Eigen::VectorXd& b, Eigen::MatrixXd& j) const {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double e = std::exp(b[1] * (x[i] - b[2]));
            const double s = 1.0 / (1.0 + e);         // 1/(1+e)
            const double ds = e * s * s;              // d/dz of -1/(1+e^z) = e/(1+e)^2
            j(r, 0) = 0.5 - s;
            j(r, 1) = b[0] * ds * (x[i] - b[2]);
            j(r, 2) = -b[0] * ds * b[1];
            j(r, 3) = 1.0;
        }
        return 0;
    }
};

double sse(std::span<const double> fitted, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (fitted[i] - y[i]) * (fitted[i] - y[i]);
    return s;
}

double population_std(std::span<const double> x) {
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

} // namespace

LogisticFit logistic_fit_plcc(std::span<const double> predictions, std::span<const double> targets) {
    require_same_length(predictions, targets, 5, "logistic_fit_plcc");
    LogisticFit out;
    const double sp = population_std(predictions);
    if (!(sp > 0.0) || !(population_std(targets) > 0.0)) {
        out.degenerate = true;
        return out;
    }
    const auto [tmin, tmax] = std::minmax_element(targets.begin(), targets.end());
    Eigen::VectorXd beta(4);
    beta << (*tmax - *tmin), 1.0 / sp, mean_of(predictions), mean_of(targets);

    LogisticResidual functor{predictions, targets};
    Eigen::LevenbergMarquardt<LogisticResidual> lm(functor);
    lm.parameters.maxfev = 2000;
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-14;
    lm.minimize(beta);
    const bool usable = beta.allFinite();
    std::vector<double> fitted(predictions.size());
    double logistic_sse = std::numeric_limits<double>::infinity();
    if (usable) {
        out.params = {beta[0], beta[1], beta[2], beta[3]};
        for (std::size_t i = 0; i < predictions.size(); ++i) fitted[i] = logistic4(predictions[i], out.params);
        logistic_sse = sse(fitted, targets);
        if (!std::isfinite(logistic_sse)) logistic_sse = std::numeric_limits<double>::infinity();
    }

    // The affine map is the b2 -> 0 limit of the family; prefer it when it fits at least as well.
    const LinearCalibration affine = linear_calibration(predictions, targets);
    std::vector<double> affine_fitted(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) affine_fitted[i] = affine.apply(predictions[i]);
    if (sse(affine_fitted, targets) <= logistic_sse) {
        out.affine_limit = true;
        fitted = std::move(affine_fitted);
    }
    const Correlation c = pearson(fitted, targets);
    out.plcc = c.value;
    out.degenerate = c.degenerate;
    return out;
}

double mae(std::span<const double> predictions, std::span<const double> targets) {
    require_same_length(predictions, targets, 1, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
    return s / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
    require_same_length(predictions, targets, 1, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predictions.size()));
}

LinearCalibration linear_calibration(std::span<const double> train_predictions, std::span<const double> train_targets) {
    require_same_length(train_predictions, train_targets, 2, "linear_calibration");
    const double mx = mean_of(train_predictions);
    const double my = mean_of(train_targets);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < train_predictions.size(); ++i) {
        const double dx = train_predictions[i] - mx;
        sxx += dx * dx;
        sxy += dx * (train_targets[i] - my);
    }
    const auto [lo, hi] = std::minmax_element(train_predictions.begin(), train_predictions.end());
    if (*lo == *hi || !(sxx > 0.0)) return {0.0, my, true};
    const double a = sxy / sxx;
    return {a, my - a * mx, false};
}

double trivial_predictor(std::span<const double> train_targets, TrivialKind kind) {
    if (train_targets.empty()) throw DomainError("trivial_predictor: no training targets");
    if (kind == TrivialKind::Mean) return mean_of(train_targets);
    std::vector<double> v(train_targets.begin(), train_targets.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json MetricsReport::to_json() const {
    return {{"plcc", plcc},
            {"plcc_raw", plcc_raw},
            {"srcc", srcc},
            {"krcc", krcc},
            {"mae", mae},
            {"rmse", rmse},
            {"n", n},
            {"logistic_params", logistic_params},
            {"degenerate", degenerate}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    auto field = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw AggregationError(fmt::format("metrics report lacks numeric field '{}'", key));
        }
        const double v = j.at(key).get<double>();
        if (!std::isfinite(v)) throw AggregationError(fmt::format("metrics report field '{}' is not finite", key));
        return v;
    };
    MetricsReport r;
    r.plcc = field("plcc");
    r.plcc_raw = j.contains("plcc_raw") ? field("plcc_raw") : r.plcc;
    r.srcc = field("srcc");
    r.krcc = field("krcc");
    r.mae = field("mae");
    r.rmse = field("rmse");
    r.n = j.value("n", std::size_t{0});
    if (j.contains("logistic_params")) r.logistic_params = j.at("logistic_params").get<std::array<double, 4>>();
    r.degenerate = j.value("degenerate", false);
    return r;
}

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
    require_same_length(predictions, targets, 2, "compute_metrics");
    std::vector<double> p(predictions.size());
    std::transform(predictions.begin(), predictions.end(), p.begin(), [](double v) { return std::clamp(v, 0.0, 1.0); });
    MetricsReport r;
    r.n = p.size();
    const Correlation raw = pearson(p, targets);
    const Correlation s = spearman(p, targets);
    const Correlation k = kendall(p, targets);
    r.plcc_raw = raw.value;
    r.srcc = s.value;
    r.krcc = k.value;
    r.degenerate = raw.degenerate || s.degenerate || k.degenerate;
    if (p.size() >= 5) {
        const LogisticFit fit = logistic_fit_plcc(p, targets);
        r.plcc = fit.plcc;
        r.logistic_params = fit.params;
        r.degenerate = r.degenerate || fit.degenerate;
    } else {
        r.plcc = raw.value;
    }
    r.mae = mae(p, targets);
    r.rmse = rmse(p, targets);
    return r;
}

std::map<std::string, MeanStd> aggregate_seed_runs(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw AggregationError("aggregate_seed_runs: no reports");
    const std::pair<const char*, double MetricsReport::*> fields[] = {
        {"plcc", &MetricsReport::plcc}, {"plcc_raw", &MetricsReport::plcc_raw}, {"srcc", &MetricsReport::srcc},
        {"krcc", &MetricsReport::krcc}, {"mae", &MetricsReport::mae},           {"rmse", &MetricsReport::rmse}};
    std::map<std::string, MeanStd> out;
    const auto n = static_cast<double>(reports.size());
    for (const auto& [name, member] : fields) {
        double sum = 0.0;
        for (const auto& r : reports) {
            const double v = r.*member;
            if (!std::isfinite(v)) throw AggregationError(fmt::format("metric '{}' is missing in a report", name));
            sum += v;
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto& r : reports) sq += (r.*member - mean) * (r.*member - mean);
        out[name] = {mean, std::sqrt(sq / n)};
    }
    return out;
}

std::string format_mean_std(const MeanStd& v, int digits) {
    return fmt::format("{:.{}f}±{:.{}f}", v.mean, digits, v.std, digits);
}

} // namespace aes3d
