#include "kdfe/stats/stats.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace kdfe::stats {

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ValueError("pearson: length mismatch");
    }
    if (x.size() < 2) {
        throw ValueError("pearson: need at least two observations");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) {
        throw ValueError("pearson: zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            return h;
        }
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0 || b <= 0) {
        throw ValueError("incomplete beta requires positive shape parameters");
    }
    if (x <= 0) {
        return 0.0;
    }
    if (x >= 1) {
        return 1.0;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
    if (std::isinf(f)) {
        return 0.0;
    }
    if (f <= 0) {
        return 1.0;
    }
    return std::clamp(regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)), 0.0, 1.0);
}

AnovaResult anova_f(std::span<const std::vector<double>> groups) {
    if (groups.size() < 2) {
        throw ValueError("anova: need at least two groups");
    }
    std::size_t total = 0;
    double grand_sum = 0;
    for (const auto &g : groups) {
        if (g.empty()) {
            throw ValueError("anova: empty group");
        }
        total += g.size();
        grand_sum += std::accumulate(g.begin(), g.end(), 0.0);
    }
    if (total < groups.size() + 1) {
        throw ValueError("anova: need more observations than groups");
    }
    const double grand_mean = grand_sum / static_cast<double>(total);
    double ssb = 0, ssw = 0;
    for (const auto &g : groups) {
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (mean - grand_mean) * (mean - grand_mean);
        for (double v : g) {
            ssw += (v - mean) * (v - mean);
        }
    }
    AnovaResult r;
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(total - groups.size());
    // Relative cut-off: sums of squares that are rounding noise count as zero.
    const double scale = std::max(1.0, grand_mean * grand_mean * static_cast<double>(total));
    const bool ssb_zero = ssb <= 1e-24 * scale;
    const bool ssw_zero = ssw <= 1e-24 * scale;
    if (ssw_zero) {
        if (ssb_zero) {
            r.f = 0.0;
            r.p = 1.0;
        } else {
            r.f = std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.f = ssb_zero ? 0.0 : (ssb / r.df_between) / (ssw / r.df_within);
    r.p = f_survival(r.f, r.df_between, r.df_within);
    return r;
}

double two_sample_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw ValueError("t-test: each group needs two observations");
    }
    auto mean = [](std::span<const double> v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const double ma = mean(a), mb = mean(b);
    double ss = 0;
    for (double v : a) {
        ss += (v - ma) * (v - ma);
    }
    for (double v : b) {
        ss += (v - mb) * (v - mb);
    }
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double pooled = ss / (na + nb - 2);
    return (ma - mb) / std::sqrt(pooled * (1 / na + 1 / nb));
}

CorrelationMatrix correlation_matrix(const std::vector<std::string> &labels,
                                     const std::vector<std::vector<std::optional<double>>> &columns) {
    if (labels.size() != columns.size()) {
        throw ValueError("correlation_matrix: label/column count mismatch");
    }
    const auto k = labels.size();
    CorrelationMatrix m;
    m.labels = labels;
    m.values.assign(k * k, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> x, y;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            x.clear();
            y.clear();
            const auto &ci = columns[i];
            const auto &cj = columns[j];
            for (std::size_t r = 0; r < std::min(ci.size(), cj.size()); ++r) {
                if (ci[r] && cj[r]) {
                    x.push_back(*ci[r]);
                    y.push_back(*cj[r]);
                }
            }
            double r = std::numeric_limits<double>::quiet_NaN();
            try {
                r = pearson(x, y);
            } catch (const ValueError &) {
            }
            if (i == j && !std::isnan(r)) {
                r = 1.0;
            }
            m.values[i * k + j] = r;
            m.values[j * k + i] = r;
        }
    }
    return m;
}

nlohmann::json CorrelationMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    const auto k = labels.size();
    for (std::size_t i = 0; i < k; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < k; ++j) {
            const double v = at(i, j);
            row.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
        }
        rows.push_back(std::move(row));
    }
    return {{"labels", labels}, {"values", std::move(rows)}};
}

std::string CorrelationMatrix::to_csv() const {
    std::ostringstream out;
    csv::Row header{""};
    header.insert(header.end(), labels.begin(), labels.end());
    csv::write_row(out, header);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        csv::Row row{labels[i]};
        for (std::size_t j = 0; j < labels.size(); ++j) {
            const double v = at(i, j);
            row.push_back(std::isnan(v) ? std::string{"NA"} : csv::format_double(v));
        }
        csv::write_row(out, row);
    }
    return out.str();
}

std::vector<TargetCorrelation> top_target_correlations(const CorrelationMatrix &m, std::size_t k) {
    std::vector<TargetCorrelation> out;
    if (m.labels.empty()) {
        return out;
    }
    const auto target = m.labels.size() - 1;
    for (std::size_t i = 0; i < target; ++i) {
        const double r = m.at(i, target);
        if (!std::isnan(r)) {
            out.push_back({m.labels[i], r});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
        return std::fabs(a.r) > std::fabs(b.r);
    });
    if (out.size() > k) {
        out.resize(k);
    }
    return out;
}

} // namespace kdfe::stats
