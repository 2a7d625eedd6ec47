#include "kdfe/ml/preprocess.hpp"

#include "kdfe/error.hpp"
#include "kdfe/random.hpp"
#include "kdfe/seed.hpp"
#include "kdfe/stats/stats.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

namespace kdfe::ml {

std::string_view to_string(Imputation v) noexcept {
    return v == Imputation::Mean ? "MEAN" : "MEDIAN";
}

std::string_view to_string(Balancing v) noexcept {
    switch (v) {
    case Balancing::Smote: return "SMOTE";
    case Balancing::Adasyn: return "ADASYN";
    case Balancing::None: return "NONE";
    }
    return "NONE";
}

std::string_view to_string(Scorer v) noexcept {
    switch (v) {
    case Scorer::AnovaF: return "ANOVA_F";
    case Scorer::Chi2: return "CHI2";
    case Scorer::MutualInfo: return "MUTUAL_INFO";
    }
    return "ANOVA_F";
}

Imputation parse_imputation(std::string_view s) {
    if (s == "MEAN") {
        return Imputation::Mean;
    }
    if (s == "MEDIAN") {
        return Imputation::Median;
    }
    throw ValidationError("unknown imputation '" + std::string{s} + "'");
}

Balancing parse_balancing(std::string_view s) {
    for (auto b : {Balancing::Smote, Balancing::Adasyn, Balancing::None}) {
        if (s == to_string(b)) {
            return b;
        }
    }
    throw ValidationError("unknown balancing '" + std::string{s} + "'");
}

Scorer parse_scorer(std::string_view s) {
    for (auto b : {Scorer::AnovaF, Scorer::Chi2, Scorer::MutualInfo}) {
        if (s == to_string(b)) {
            return b;
        }
    }
    throw ValidationError("unknown feature scorer '" + std::string{s} + "'");
}

namespace {

struct GroupInfo {
    std::uint8_t label;
    std::vector<std::size_t> rows;
    std::string name;
};

// Orders groups by a seeded hash of their name, so a group's position does
// not depend on which other groups are present.
void hash_order(std::vector<std::size_t> &members, const std::vector<GroupInfo> &gs, std::uint64_t seed) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (auto g : members) {
        keyed.emplace_back(derive_seed(seed, gs[g].name), g);
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto &a, const auto &b) {
        return a.first != b.first ? a.first < b.first : gs[a.second].name < gs[b.second].name;
    });
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        members[i] = keyed[i].second;
    }
}

// Groups in order of first appearance.
std::vector<GroupInfo> collect_groups(std::span<const std::uint8_t> y, std::span<const std::string> groups) {
    std::vector<GroupInfo> out;
    if (groups.empty()) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            out.push_back({y[i], {i}, "#" + std::to_string(i)});
        }
        return out;
    }
    if (groups.size() != y.size()) {
        throw ValidationError("group key count does not match the label count");
    }
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto [it, fresh] = index.emplace(groups[i], out.size());
        if (fresh) {
            out.push_back({y[i], {}, groups[i]});
        }
        out[it->second].rows.push_back(i);
    }
    return out;
}

} // namespace

Split stratified_split(std::span<const std::uint8_t> y, std::span<const std::string> groups,
                       double train_ratio, std::uint64_t seed) {
    if (!(train_ratio > 0 && train_ratio < 1)) {
        throw ValidationError("train ratio must lie in (0, 1)");
    }
    const auto gs = collect_groups(y, groups);
    Split s;
    for (std::uint8_t label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            if (gs[g].label == label) {
                members.push_back(g);
            }
        }
        if (members.size() < 2) {
            throw ValidationError("class " + std::to_string(label) + " has fewer than two members");
        }
        hash_order(members, gs, seed);
        auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(members.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        for (std::size_t i = 0; i < members.size(); ++i) {
            auto &dst = i < n_train ? s.train : s.test;
            dst.insert(dst.end(), gs[members[i]].rows.begin(), gs[members[i]].rows.end());
        }
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint8_t> y,
                                                       std::span<const std::string> groups, int k,
                                                       std::uint64_t seed) {
    if (k < 2) {
        throw ValidationError("need at least two folds");
    }
    const auto gs = collect_groups(y, groups);
    if (gs.size() < static_cast<std::size_t>(k)) {
        throw ValidationError("fewer groups than folds");
    }
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0;
    for (std::uint8_t label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            if (gs[g].label == label) {
                members.push_back(g);
            }
        }
        hash_order(members, gs, seed);
        for (auto g : members) {
            auto &f = folds[next++ % folds.size()];
            f.insert(f.end(), gs[g].rows.begin(), gs[g].rows.end());
        }
    }
    for (auto &f : folds) {
        std::sort(f.begin(), f.end());
    }
    return folds;
}

namespace {

std::string suffix_letters(std::size_t i) {
    std::string s;
    ++i;
    while (i > 0) {
        --i;
        s.insert(s.begin(), static_cast<char>('a' + i % 26));
        i /= 26;
    }
    return s;
}

std::string category_of(const std::string &v) {
    return v.empty() ? std::string{kMissingCategory} : v;
}

} // namespace

void Encoder::fit(const RawMatrix &train, std::size_t threshold) {
    train.validate();
    outputs_.clear();
    target_means_.clear();
    source_columns_ = train.columns.size();
    const double n = static_cast<double>(train.rows());
    global_mean_ = n > 0 ? std::accumulate(train.y.begin(), train.y.end(), 0.0) / n : 0.0;
    for (std::size_t c = 0; c < train.columns.size(); ++c) {
        const auto &col = train.columns[c];
        if (!col.categorical) {
            outputs_.push_back({Kind::Numeric, c, col.name, {}});
            continue;
        }
        std::map<std::string, std::pair<double, double>> stats; // category -> (sum y, count)
        for (std::size_t r = 0; r < train.rows(); ++r) {
            auto &s = stats[category_of(col.categories[r])];
            s.first += train.y[r];
            s.second += 1;
        }
        if (stats.size() <= threshold) {
            std::vector<std::string> cats;
            if (stats.contains(std::string{kMissingCategory})) {
                cats.emplace_back(kMissingCategory);
            }
            for (const auto &[cat, _] : stats) {
                if (cat != kMissingCategory) {
                    cats.push_back(cat);
                }
            }
            for (std::size_t i = 0; i < cats.size(); ++i) {
                outputs_.push_back({Kind::OneHot, c, col.name + suffix_letters(i), cats[i]});
            }
        } else {
            auto &means = target_means_[c];
            for (const auto &[cat, s] : stats) {
                means[cat] = s.first / s.second;
            }
            outputs_.push_back({Kind::TargetMean, c, col.name, {}});
        }
    }
}

Matrix Encoder::transform(const RawMatrix &m) const {
    if (m.columns.size() != source_columns_) {
        throw ValidationError("encoder expects " + std::to_string(source_columns_) + " columns, got " +
                              std::to_string(m.columns.size()));
    }
    m.validate();
    Matrix out(m.rows(), outputs_.size());
    for (std::size_t j = 0; j < outputs_.size(); ++j) {
        const auto &o = outputs_[j];
        const auto &col = m.columns[o.source];
        if ((o.kind == Kind::Numeric) == col.categorical) {
            throw ValidationError("column " + col.name + " changed type since fitting");
        }
        for (std::size_t r = 0; r < m.rows(); ++r) {
            switch (o.kind) {
            case Kind::Numeric: out(r, j) = col.numeric[r]; break;
            case Kind::OneHot: out(r, j) = category_of(col.categories[r]) == o.category ? 1.0 : 0.0; break;
            case Kind::TargetMean: {
                const auto &means = target_means_.at(o.source);
                auto it = means.find(category_of(col.categories[r]));
                out(r, j) = it == means.end() ? global_mean_ : it->second;
                break;
            }
            }
        }
    }
    return out;
}

std::vector<std::string> Encoder::names() const {
    std::vector<std::string> out;
    for (const auto &o : outputs_) {
        out.push_back(o.name);
    }
    return out;
}

nlohmann::json Encoder::to_json() const {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto &o : outputs_) {
        nlohmann::json j{{"name", o.name}, {"source", o.source}};
        switch (o.kind) {
        case Kind::Numeric: j["kind"] = "numeric"; break;
        case Kind::OneHot:
            j["kind"] = "one_hot";
            j["category"] = o.category;
            break;
        case Kind::TargetMean:
            j["kind"] = "target_mean";
            j["means"] = target_means_.at(o.source);
            break;
        }
        outs.push_back(std::move(j));
    }
    return {{"global_mean", global_mean_}, {"outputs", std::move(outs)}};
}

void Imputer::fit(const Matrix &train, Imputation strategy) {
    fill_.assign(train.cols, 0.0);
    std::vector<double> v;
    for (std::size_t c = 0; c < train.cols; ++c) {
        v.clear();
        for (std::size_t r = 0; r < train.rows; ++r) {
            if (!std::isnan(train(r, c))) {
                v.push_back(train(r, c));
            }
        }
        if (v.empty()) {
            continue;
        }
        if (strategy == Imputation::Mean) {
            fill_[c] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        } else {
            std::sort(v.begin(), v.end());
            const auto mid = v.size() / 2;
            fill_[c] = v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
        }
    }
}

void Imputer::transform(Matrix &m) const {
    if (m.cols != fill_.size()) {
        throw ValidationError("imputer column mismatch");
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (std::isnan(m(r, c))) {
                m(r, c) = fill_[c];
            }
        }
    }
}

nlohmann::json Imputer::to_json() const { return {{"fill", fill_}}; }

void MinMaxScaler::fit(const Matrix &train) {
    min_.assign(train.cols, std::numeric_limits<double>::infinity());
    max_.assign(train.cols, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < train.rows; ++r) {
        for (std::size_t c = 0; c < train.cols; ++c) {
            const double v = train(r, c);
            if (!std::isnan(v)) {
                min_[c] = std::min(min_[c], v);
                max_[c] = std::max(max_[c], v);
            }
        }
    }
}

void MinMaxScaler::transform(Matrix &m) const {
    if (m.cols != min_.size()) {
        throw ValidationError("scaler column mismatch");
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            const double range = max_[c] - min_[c];
            auto &v = m(r, c);
            v = range > 0 ? std::clamp((v - min_[c]) / range, 0.0, 1.0) : 0.0;
        }
    }
}

nlohmann::json MinMaxScaler::to_json() const {
    auto finite = [](const std::vector<double> &v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) {
            a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json());
        }
        return a;
    };
    return {{"min", finite(min_)}, {"max", finite(max_)}};
}

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// k nearest rows of `pool` for `query`, ties by lower pool position.
std::vector<std::size_t> nearest(const Matrix &x, std::span<const std::size_t> pool, std::size_t query,
                                 std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size());
    for (std::size_t p = 0; p < pool.size(); ++p) {
        if (pool[p] != query) {
            d.emplace_back(sq_distance(x.row(query), x.row(pool[p])), p);
        }
    }
    k = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(pool[d[i].second]);
    }
    return out;
}

// Largest-remainder apportionment of `total` by `weights`.
std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> q(weights.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = weights[i] / sum * static_cast<double>(total);
        q[i] = static_cast<std::size_t>(std::floor(exact));
        used += q[i];
        rem.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::sort(rem.begin(), rem.end());
    for (std::size_t i = 0; used < total; ++i, ++used) {
        ++q[rem[i % rem.size()].second];
    }
    return q;
}

} // namespace

Balanced oversample(const Matrix &x, std::span<const std::uint8_t> y, Balancing method, std::uint64_t seed,
                    const WarnFn &warn) {
    Balanced out{x, {y.begin(), y.end()}, 0};
    if (method == Balancing::None) {
        return out;
    }
    std::vector<std::size_t> cls[2];
    for (std::size_t i = 0; i < y.size(); ++i) {
        cls[y[i] ? 1 : 0].push_back(i);
    }
    const std::uint8_t minority = cls[1].size() < cls[0].size() ? 1 : 0;
    const auto &mins = cls[minority];
    const auto need = cls[1 - minority].size() - mins.size();
    if (need == 0) {
        return out;
    }
    if (mins.empty()) {
        if (warn) {
            warn("no minority samples to oversample");
        }
        return out;
    }
    auto append = [&](std::span<const double> row) {
        out.x.data.insert(out.x.data.end(), row.begin(), row.end());
        ++out.x.rows;
        out.y.push_back(minority);
        ++out.synthetic;
    };
    if (mins.size() == 1) {
        if (warn) {
            warn("single minority sample; duplicating it instead of interpolating");
        }
        for (std::size_t i = 0; i < need; ++i) {
            append(x.row(mins[0]));
        }
        return out;
    }
    Rng rng{seed};
    const std::size_t k = std::min<std::size_t>(5, mins.size() - 1);
    std::vector<std::vector<std::size_t>> nbrs;
    nbrs.reserve(mins.size());
    for (auto i : mins) {
        nbrs.push_back(nearest(x, mins, i, k));
    }
    std::vector<std::size_t> quota;
    if (method == Balancing::Adasyn) {
        std::vector<std::size_t> all(y.size());
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> ratio;
        for (auto i : mins) {
            const auto nn = nearest(x, all, i, 5);
            double majority = 0;
            for (auto j : nn) {
                majority += y[j] != minority;
            }
            ratio.push_back(nn.empty() ? 0.0 : majority / static_cast<double>(nn.size()));
        }
        if (std::accumulate(ratio.begin(), ratio.end(), 0.0) > 0) {
            quota = apportion(ratio, need);
        } else if (warn) {
            warn("ADASYN found no majority neighbours; falling back to uniform quotas");
        }
    }
    std::vector<double> buf(x.cols);
    auto synthesize = [&](std::size_t p) {
        const auto base = x.row(mins[p]);
        const auto nb = x.row(nbrs[p][rng.below(nbrs[p].size())]);
        const double lambda = rng.uniform();
        for (std::size_t c = 0; c < x.cols; ++c) {
            buf[c] = base[c] + lambda * (nb[c] - base[c]);
        }
        append(buf);
    };
    if (quota.empty()) {
        for (std::size_t s = 0; s < need; ++s) {
            synthesize(rng.below(mins.size()));
        }
    } else {
        for (std::size_t p = 0; p < mins.size(); ++p) {
            for (std::size_t s = 0; s < quota[p]; ++s) {
                synthesize(p);
            }
        }
    }
    return out;
}

std::vector<double> anova_scores(const Matrix &x, std::span<const std::uint8_t> y) {
    std::vector<double> scores(x.cols, 0.0);
    std::vector<std::vector<double>> groups(2);
    for (std::size_t c = 0; c < x.cols; ++c) {
        groups[0].clear();
        groups[1].clear();
        for (std::size_t r = 0; r < x.rows; ++r) {
            groups[y[r] ? 1 : 0].push_back(x(r, c));
        }
        if (groups[0].empty() || groups[1].empty() || x.rows < 3) {
            continue;
        }
        scores[c] = stats::anova_f(groups).f;
    }
    return scores;
}

std::vector<double> chi2_scores(const Matrix &x, std::span<const std::uint8_t> y) {
    std::vector<double> scores(x.cols, 0.0);
    const double n = static_cast<double>(x.rows);
    double n1 = 0;
    for (auto v : y) {
        n1 += v ? 1 : 0;
    }
    const double prob[2] = {(n - n1) / n, n1 / n};
    for (std::size_t c = 0; c < x.cols; ++c) {
        double observed[2] = {0, 0};
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double v = x(r, c);
            if (v < 0) {
                throw ValidationError("chi2 scoring requires non-negative features");
            }
            observed[y[r] ? 1 : 0] += v;
        }
        const double total = observed[0] + observed[1];
        if (total <= 0) {
            continue;
        }
        double chi = 0;
        for (int k = 0; k < 2; ++k) {
            const double expected = prob[k] * total;
            if (expected > 0) {
                chi += (observed[k] - expected) * (observed[k] - expected) / expected;
            }
        }
        scores[c] = chi;
    }
    return scores;
}

namespace {

// Ross (2014) estimator for one continuous column against a discrete label.
double mi_continuous_discrete(std::span<const double> v, std::span<const std::uint8_t> y, int n_neighbors) {
    using boost::math::digamma;
    const std::size_t n = v.size();
    std::vector<std::size_t> cls_rows[2];
    for (std::size_t i = 0; i < n; ++i) {
        cls_rows[y[i] ? 1 : 0].push_back(i);
    }
    std::vector<double> radius(n, 0.0);
    std::vector<double> k_all(n, 0.0);
    std::vector<bool> keep(n, false);
    for (const auto &rows : cls_rows) {
        if (rows.size() < 2) {
            continue;
        }
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(n_neighbors), rows.size() - 1);
        std::vector<double> sorted;
        for (auto i : rows) {
            sorted.push_back(v[i]);
        }
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sorted[a] < sorted[b]; });
        std::vector<double> s(order.size());
        for (std::size_t p = 0; p < order.size(); ++p) {
            s[p] = sorted[order[p]];
        }
        for (std::size_t p = 0; p < s.size(); ++p) {
            std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(p) - 1;
            std::size_t hi = p + 1;
            double d = 0;
            for (std::size_t step = 0; step < k; ++step) {
                const double dl = lo >= 0 ? s[p] - s[static_cast<std::size_t>(lo)]
                                          : std::numeric_limits<double>::infinity();
                const double dr = hi < s.size() ? s[hi] - s[p] : std::numeric_limits<double>::infinity();
                if (dl <= dr) {
                    d = dl;
                    --lo;
                } else {
                    d = dr;
                    ++hi;
                }
            }
            const auto row = rows[order[p]];
            radius[row] = std::nextafter(d, 0.0);
            k_all[row] = static_cast<double>(k);
            keep[row] = true;
        }
    }
    std::vector<double> all;
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) {
            all.push_back(v[i]);
        }
    }
    if (all.empty()) {
        return 0.0;
    }
    std::sort(all.begin(), all.end());
    double sum_k = 0, sum_label = 0, sum_m = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) {
            continue;
        }
        const double x = v[i], r = radius[i];
        const auto left = std::partition_point(all.begin(), all.end(), [&](double u) { return x - u > r; });
        const auto right = std::partition_point(all.begin(), all.end(), [&](double u) { return u - x <= r; });
        const double m = static_cast<double>(right - left);
        sum_k += digamma(k_all[i]);
        sum_label += digamma(static_cast<double>(cls_rows[y[i] ? 1 : 0].size()));
        sum_m += digamma(m);
    }
    const double cnt = static_cast<double>(all.size());
    const double mi = digamma(cnt) + (sum_k - sum_label - sum_m) / cnt;
    return std::max(0.0, mi);
}

} // namespace

std::vector<double> mutual_info_scores(const Matrix &x, std::span<const std::uint8_t> y, int n_neighbors,
                                       std::uint64_t seed) {
    std::vector<double> scores(x.cols, 0.0);
    std::vector<double> col(x.rows);
    Rng rng{derive_seed(seed, "mutual_info")};
    for (std::size_t c = 0; c < x.cols; ++c) {
        double mean = 0, sq = 0, abs_mean = 0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            col[r] = x(r, c);
            mean += col[r];
        }
        mean /= static_cast<double>(x.rows);
        for (double v : col) {
            sq += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(sq / static_cast<double>(x.rows));
        for (auto &v : col) {
            if (sd > 0) {
                v /= sd;
            }
            abs_mean += std::abs(v);
        }
        abs_mean /= static_cast<double>(x.rows);
        const double amp = 1e-10 * std::max(1.0, abs_mean);
        for (auto &v : col) {
            v += amp * rng.normal();
        }
        scores[c] = mi_continuous_discrete(col, y, n_neighbors);
    }
    return scores;
}

std::vector<double> feature_scores(const Matrix &x, std::span<const std::uint8_t> y, Scorer scorer) {
    switch (scorer) {
    case Scorer::AnovaF: return anova_scores(x, y);
    case Scorer::Chi2: return chi2_scores(x, y);
    case Scorer::MutualInfo: return mutual_info_scores(x, y);
    }
    return {};
}

std::vector<std::size_t> rank_features(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t i) { return std::isnan(scores[i]) ? 0.0 : scores[i]; };
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return key(a) > key(b); });
    return order;
}

std::vector<std::size_t> select_k_best(std::span<const double> scores, std::size_t k, const WarnFn &warn) {
    auto order = rank_features(scores);
    if (k > order.size()) {
        if (warn) {
            warn("k = " + std::to_string(k) + " exceeds the " + std::to_string(order.size()) +
                 " available features; keeping all");
        }
        return order;
    }
    order.resize(k);
    return order;
}

} // namespace kdfe::ml
