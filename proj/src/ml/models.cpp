#include "kdfe/ml/models.hpp"

#include "kdfe/error.hpp"
#include "kdfe/random.hpp"
#include "kdfe/seed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace kdfe::ml {

std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
    case ModelKind::Knn: return "KNN";
    case ModelKind::LogReg: return "LOGREG";
    case ModelKind::LinearSvm: return "LINEAR_SVM";
    case ModelKind::RbfSvm: return "RBF_SVM";
    case ModelKind::RandomForest: return "RANDOM_FOREST";
    }
    return "KNN";
}

ModelKind parse_model(std::string_view s) {
    for (auto k : {ModelKind::Knn, ModelKind::LogReg, ModelKind::LinearSvm, ModelKind::RbfSvm,
                   ModelKind::RandomForest}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw ValidationError("unknown model '" + std::string{s} + "'");
}

std::vector<HyperParams> hyper_grid(ModelKind kind) {
    std::vector<HyperParams> g;
    switch (kind) {
    case ModelKind::Knn:
        for (int k : {3, 5, 7}) {
            HyperParams h;
            h.n_neighbors = k;
            g.push_back(h);
        }
        break;
    case ModelKind::LogReg:
        for (double c : {0.001, 0.01, 0.1, 1.0, 10.0}) {
            HyperParams h;
            h.c = c;
            g.push_back(h);
        }
        break;
    case ModelKind::LinearSvm:
        for (double c : {0.001, 0.01, 0.1, 1.0, 10.0}) {
            for (bool sq : {false, true}) {
                HyperParams h;
                h.c = c;
                h.squared_hinge = sq;
                g.push_back(h);
            }
        }
        break;
    case ModelKind::RbfSvm:
        for (double c : {0.1, 1.0, 10.0}) {
            HyperParams h;
            h.c = c;
            g.push_back(h);
        }
        break;
    case ModelKind::RandomForest:
        for (int n : {100, 200, 300}) {
            for (int d : {0, 5, 10}) {
                HyperParams h;
                h.n_estimators = n;
                h.max_depth = d;
                g.push_back(h);
            }
        }
        break;
    }
    return g;
}

namespace {
std::string short_double(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (s.back() == '.') {
        s.pop_back();
    }
    return s;
}
} // namespace

std::string describe(ModelKind kind, const HyperParams &hp) {
    switch (kind) {
    case ModelKind::Knn: return "n_neighbors=" + std::to_string(hp.n_neighbors);
    case ModelKind::LogReg:
    case ModelKind::RbfSvm: return "C=" + short_double(hp.c);
    case ModelKind::LinearSvm:
        return "C=" + short_double(hp.c) + " loss=" + (hp.squared_hinge ? "squared_hinge" : "hinge");
    case ModelKind::RandomForest:
        return "n_estimators=" + std::to_string(hp.n_estimators) +
               " max_depth=" + (hp.max_depth ? std::to_string(hp.max_depth) : std::string{"None"});
    }
    return {};
}

nlohmann::json to_json(ModelKind kind, const HyperParams &hp) {
    switch (kind) {
    case ModelKind::Knn: return {{"n_neighbors", hp.n_neighbors}};
    case ModelKind::LogReg:
    case ModelKind::RbfSvm: return {{"C", hp.c}};
    case ModelKind::LinearSvm: return {{"C", hp.c}, {"loss", hp.squared_hinge ? "squared_hinge" : "hinge"}};
    case ModelKind::RandomForest:
        return {{"n_estimators", hp.n_estimators},
                {"max_depth", hp.max_depth ? nlohmann::json(hp.max_depth) : nlohmann::json()}};
    }
    return {};
}

double sigmoid(double z) noexcept {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

void check_shape(const Matrix &x, std::span<const std::uint8_t> y, std::size_t wsize) {
    if (x.rows != y.size()) {
        throw ValidationError("row / label count mismatch");
    }
    if (wsize != x.cols + 1) {
        throw ValidationError("weight vector must have cols + 1 entries");
    }
}

double linear(std::span<const double> row, std::span<const double> w) {
    double z = w.back();
    for (std::size_t j = 0; j < row.size(); ++j) {
        z += w[j] * row[j];
    }
    return z;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace

double logistic_objective(const Matrix &x, std::span<const std::uint8_t> y, std::span<const double> w,
                          double lambda) {
    check_shape(x, y, w.size());
    double loss = 0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double z = linear(x.row(r), w);
        loss += softplus(z) - (y[r] ? z : 0.0);
    }
    double reg = 0;
    for (std::size_t j = 0; j + 1 < w.size(); ++j) {
        reg += w[j] * w[j];
    }
    return loss / static_cast<double>(x.rows) + 0.5 * lambda * reg;
}

std::vector<double> logistic_gradient(const Matrix &x, std::span<const std::uint8_t> y,
                                      std::span<const double> w, double lambda) {
    check_shape(x, y, w.size());
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = x.row(r);
        const double err = sigmoid(linear(row, w)) - y[r];
        for (std::size_t j = 0; j < row.size(); ++j) {
            g[j] += err * row[j];
        }
        g.back() += err;
    }
    const double n = static_cast<double>(x.rows);
    for (std::size_t j = 0; j < g.size(); ++j) {
        g[j] /= n;
        if (j + 1 < g.size()) {
            g[j] += lambda * w[j];
        }
    }
    return g;
}

double svm_objective(const Matrix &x, std::span<const std::uint8_t> y, std::span<const double> w, double c,
                     bool squared_hinge) {
    check_shape(x, y, w.size());
    double reg = 0;
    for (double v : w) {
        reg += v * v;
    }
    double loss = 0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double t = y[r] ? 1.0 : -1.0;
        const double slack = std::max(0.0, 1.0 - t * linear(x.row(r), w));
        loss += squared_hinge ? slack * slack : slack;
    }
    return 0.5 * reg + c * loss;
}

std::vector<double> svm_subgradient(const Matrix &x, std::span<const std::uint8_t> y,
                                    std::span<const double> w, double c, bool squared_hinge) {
    check_shape(x, y, w.size());
    std::vector<double> g(w.begin(), w.end());
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double t = y[r] ? 1.0 : -1.0;
        const auto row = x.row(r);
        const double slack = 1.0 - t * linear(row, w);
        if (slack <= 0) {
            continue;
        }
        const double scale = squared_hinge ? -2.0 * c * slack * t : -c * t;
        for (std::size_t j = 0; j < row.size(); ++j) {
            g[j] += scale * row[j];
        }
        g.back() += scale;
    }
    return g;
}

// ---- KNN

void KnnModel::fit(const Matrix &x, std::span<const std::uint8_t> y) {
    if (x.rows != y.size() || x.rows == 0) {
        throw ValidationError("KNN needs a non-empty training set with one label per row");
    }
    x_ = x;
    y_.assign(y.begin(), y.end());
}

std::vector<std::vector<std::uint32_t>> KnnModel::neighbours(const Matrix &q, std::size_t k) const {
    if (q.cols != x_.cols) {
        throw ValidationError("KNN query has " + std::to_string(q.cols) + " columns, model has " +
                              std::to_string(x_.cols));
    }
    k = std::min(k, x_.rows);
    std::vector<std::vector<std::uint32_t>> out(q.rows);
    std::vector<std::pair<double, std::uint32_t>> d(x_.rows);
    for (std::size_t r = 0; r < q.rows; ++r) {
        const auto a = q.row(r);
        for (std::size_t i = 0; i < x_.rows; ++i) {
            const double *b = x_.data.data() + i * x_.cols;
            double s = 0;
            for (std::size_t j = 0; j < x_.cols; ++j) {
                const double t = a[j] - b[j];
                s += t * t;
            }
            d[i] = {s, static_cast<std::uint32_t>(i)};
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        auto &o = out[r];
        o.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            o.push_back(d[i].second);
        }
    }
    return out;
}

std::vector<double> KnnModel::scores(const std::vector<std::vector<std::uint32_t>> &nbrs, std::size_t k) const {
    std::vector<double> s;
    s.reserve(nbrs.size());
    for (const auto &n : nbrs) {
        const auto m = std::min(k, n.size());
        double pos = 0;
        for (std::size_t i = 0; i < m; ++i) {
            pos += y_[n[i]];
        }
        s.push_back(m ? pos / static_cast<double>(m) : 0.0);
    }
    return s;
}

std::vector<double> KnnModel::predict_scores(const Matrix &q, std::size_t k) const {
    return scores(neighbours(q, k), k);
}

nlohmann::json KnnModel::to_json() const {
    return {{"rows", x_.rows}, {"cols", x_.cols}, {"x", x_.data}, {"y", y_}};
}

// ---- logistic regression

void LogisticModel::fit(const Matrix &x, std::span<const std::uint8_t> y, double c, int max_iter) {
    if (x.rows == 0 || c <= 0) {
        throw ValidationError("logistic regression needs rows and C > 0");
    }
    const double lambda = 1.0 / (c * static_cast<double>(x.rows));
    w_.assign(x.cols + 1, 0.0);
    converged_ = false;
    double f = logistic_objective(x, y, w_, lambda);
    double step = 1.0;
    std::vector<double> trial(w_.size());
    for (int it = 0; it < max_iter; ++it) {
        const auto g = logistic_gradient(x, y, w_, lambda);
        double gmax = 0, gnorm2 = 0;
        for (double v : g) {
            gmax = std::max(gmax, std::fabs(v));
            gnorm2 += v * v;
        }
        if (gmax < 1e-4) {
            converged_ = true;
            break;
        }
        step *= 2.0;
        for (;;) {
            for (std::size_t j = 0; j < w_.size(); ++j) {
                trial[j] = w_[j] - step * g[j];
            }
            const double ft = logistic_objective(x, y, trial, lambda);
            if (ft <= f - 0.5 * step * gnorm2 || step < 1e-12) {
                w_ = trial;
                f = ft;
                break;
            }
            step *= 0.5;
        }
    }
}

std::vector<double> LogisticModel::predict_scores(const Matrix &q) const {
    if (q.cols + 1 != w_.size()) {
        throw ValidationError("logistic model column mismatch");
    }
    std::vector<double> s(q.rows);
    for (std::size_t r = 0; r < q.rows; ++r) {
        s[r] = sigmoid(linear(q.row(r), w_));
    }
    return s;
}

nlohmann::json LogisticModel::to_json() const { return {{"w", w_}, {"converged", converged_}}; }

// ---- linear SVM, dual coordinate descent

void LinearSvmModel::fit(const Matrix &x, std::span<const std::uint8_t> y, double c, bool squared_hinge,
                         std::uint64_t seed, int max_iter, double tol) {
    if (x.rows == 0 || c <= 0) {
        throw ValidationError("linear SVM needs rows and C > 0");
    }
    const std::size_t n = x.rows, d = x.cols;
    const double upper = squared_hinge ? std::numeric_limits<double>::infinity() : c;
    const double diag = squared_hinge ? 0.5 / c : 0.0;
    w_.assign(d + 1, 0.0);
    std::vector<double> alpha(n, 0.0), qd(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 1.0 + diag;
        for (double v : x.row(i)) {
            s += v * v;
        }
        qd[i] = s;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng{seed};
    converged_ = false;
    for (int it = 0; it < max_iter; ++it) {
        rng.shuffle(std::span{order});
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (auto i : order) {
            const double t = y[i] ? 1.0 : -1.0;
            const auto row = x.row(i);
            const double g = t * linear(row, w_) - 1.0 + diag * alpha[i];
            double pg = 0;
            if (alpha[i] == 0) {
                pg = std::min(g, 0.0);
            } else if (alpha[i] == upper) {
                pg = std::max(g, 0.0);
            } else {
                pg = g;
            }
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::fabs(pg) > 1e-12) {
                const double old = alpha[i];
                alpha[i] = std::min(std::max(alpha[i] - g / qd[i], 0.0), upper);
                const double delta = (alpha[i] - old) * t;
                for (std::size_t j = 0; j < d; ++j) {
                    w_[j] += delta * row[j];
                }
                w_[d] += delta;
            }
        }
        if (pg_max - pg_min <= tol) {
            converged_ = true;
            break;
        }
    }
}

std::vector<double> LinearSvmModel::decision(const Matrix &q) const {
    if (q.cols + 1 != w_.size()) {
        throw ValidationError("linear SVM column mismatch");
    }
    std::vector<double> s(q.rows);
    for (std::size_t r = 0; r < q.rows; ++r) {
        s[r] = linear(q.row(r), w_);
    }
    return s;
}

std::vector<double> LinearSvmModel::predict_scores(const Matrix &q) const {
    auto s = decision(q);
    for (auto &v : s) {
        v = sigmoid(v);
    }
    return s;
}

nlohmann::json LinearSvmModel::to_json() const { return {{"w", w_}, {"converged", converged_}}; }

// ---- RBF SVM

double default_gamma(const Matrix &x) {
    if (x.data.empty() || x.cols == 0) {
        return 1.0;
    }
    const double n = static_cast<double>(x.data.size());
    const double mean = std::accumulate(x.data.begin(), x.data.end(), 0.0) / n;
    double ss = 0;
    for (double v : x.data) {
        ss += (v - mean) * (v - mean);
    }
    const double var = ss / n;
    return var > 0 ? 1.0 / (static_cast<double>(x.cols) * var) : 1.0;
}

namespace {
double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double t = a[j] - b[j];
        s += t * t;
    }
    return std::exp(-gamma * s);
}
} // namespace

KernelCache rbf_kernel(const Matrix &x, double gamma) {
    KernelCache k{gamma, x.rows, std::vector<double>(x.rows * x.rows)};
    for (std::size_t i = 0; i < x.rows; ++i) {
        k.k[i * x.rows + i] = 1.0;
        for (std::size_t j = i + 1; j < x.rows; ++j) {
            const double v = rbf(x.row(i), x.row(j), gamma);
            k.k[i * x.rows + j] = v;
            k.k[j * x.rows + i] = v;
        }
    }
    return k;
}

void RbfSvmModel::fit(const Matrix &x, std::span<const std::uint8_t> y, double c, const KernelCache &kernel,
                      double tol, long max_iter) {
    const std::size_t n = x.rows;
    if (n == 0 || kernel.n != n || c <= 0) {
        throw ValidationError("RBF SVM needs rows, a matching kernel and C > 0");
    }
    constexpr double kTau = 1e-12;
    std::vector<double> t(n), alpha(n, 0.0), grad(n, -1.0);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = y[i] ? 1.0 : -1.0;
    }
    const double *K = kernel.k.data();
    auto upper = [&](std::size_t i) { return alpha[i] >= c; };
    auto lower = [&](std::size_t i) { return alpha[i] <= 0; };
    converged_ = false;
    for (long iter = 0; iter < max_iter; ++iter) {
        // Second-order working set selection.
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i_sel = -1;
        for (std::size_t s = 0; s < n; ++s) {
            if (t[s] > 0 ? !upper(s) : !lower(s)) {
                const double v = -t[s] * grad[s];
                if (v >= gmax) {
                    gmax = v;
                    i_sel = static_cast<std::ptrdiff_t>(s);
                }
            }
        }
        if (i_sel < 0) {
            converged_ = true;
            break;
        }
        const auto i = static_cast<std::size_t>(i_sel);
        const double *Ki = K + i * n;
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t j_sel = -1;
        for (std::size_t s = 0; s < n; ++s) {
            const double qis = t[i] * t[s] * Ki[s];
            if (t[s] > 0) {
                if (lower(s)) {
                    continue;
                }
                const double diff = gmax + grad[s];
                gmax2 = std::max(gmax2, grad[s]);
                if (diff > 0) {
                    double quad = 2.0 - 2.0 * t[i] * qis;
                    const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
                    if (obj <= best) {
                        best = obj;
                        j_sel = static_cast<std::ptrdiff_t>(s);
                    }
                }
            } else {
                if (upper(s)) {
                    continue;
                }
                const double diff = gmax - grad[s];
                gmax2 = std::max(gmax2, -grad[s]);
                if (diff > 0) {
                    double quad = 2.0 + 2.0 * t[i] * qis;
                    const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
                    if (obj <= best) {
                        best = obj;
                        j_sel = static_cast<std::ptrdiff_t>(s);
                    }
                }
            }
        }
        if (gmax + gmax2 < tol || j_sel < 0) {
            converged_ = true;
            break;
        }
        const auto j = static_cast<std::size_t>(j_sel);
        const double *Kj = K + j * n;
        const double qij = t[i] * t[j] * Ki[j];
        const double ai_old = alpha[i], aj_old = alpha[j];
        if (t[i] != t[j]) {
            double quad = 2.0 + 2.0 * qij;
            if (quad <= 0) {
                quad = kTau;
            }
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = 2.0 - 2.0 * qij;
            if (quad <= 0) {
                quad = kTau;
            }
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = sum;
                }
                if (alpha[i] < 0) {
                    alpha[i] = 0;
                    alpha[j] = sum;
                }
            }
        }
        const double dai = (alpha[i] - ai_old) * t[i];
        const double daj = (alpha[j] - aj_old) * t[j];
        for (std::size_t s = 0; s < n; ++s) {
            grad[s] += t[s] * (Ki[s] * dai + Kj[s] * daj);
        }
    }

    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0;
    std::size_t n_free = 0;
    for (std::size_t s = 0; s < n; ++s) {
        const double yg = t[s] * grad[s];
        if (upper(s)) {
            if (t[s] < 0) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else if (lower(s)) {
            if (t[s] > 0) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    b_ = -rho;
    gamma_ = kernel.gamma;
    std::vector<std::size_t> sv;
    for (std::size_t s = 0; s < n; ++s) {
        if (alpha[s] > 0) {
            sv.push_back(s);
        }
    }
    sv_ = x.select_rows(sv);
    coef_.clear();
    for (auto s : sv) {
        coef_.push_back(alpha[s] * t[s]);
    }
}

std::vector<double> RbfSvmModel::decision(const Matrix &q) const {
    if (sv_.rows && q.cols != sv_.cols) {
        throw ValidationError("RBF SVM column mismatch");
    }
    std::vector<double> out(q.rows, b_);
    for (std::size_t r = 0; r < q.rows; ++r) {
        for (std::size_t s = 0; s < sv_.rows; ++s) {
            out[r] += coef_[s] * rbf(q.row(r), sv_.row(s), gamma_);
        }
    }
    return out;
}

std::vector<double> RbfSvmModel::predict_scores(const Matrix &q) const {
    auto s = decision(q);
    for (auto &v : s) {
        v = sigmoid(v);
    }
    return s;
}

nlohmann::json RbfSvmModel::to_json() const {
    return {{"gamma", gamma_}, {"b", b_}, {"coef", coef_}, {"sv", sv_.data}, {"converged", converged_}};
}

// ---- random forest

namespace {

constexpr std::size_t kMaxBins = 64;

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct Binned {
    std::vector<std::vector<double>> thresholds;
    std::vector<std::uint8_t> bins; // row-major
};

Binned bin_features(const Matrix &x) {
    Binned b;
    b.thresholds.resize(x.cols);
    b.bins.resize(x.rows * x.cols);
    std::vector<double> v(x.rows);
    for (std::size_t c = 0; c < x.cols; ++c) {
        for (std::size_t r = 0; r < x.rows; ++r) {
            v[r] = x(r, c);
        }
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        auto &thr = b.thresholds[c];
        if (v.size() <= kMaxBins) {
            for (std::size_t i = 1; i < v.size(); ++i) {
                thr.push_back(v[i - 1] + (v[i] - v[i - 1]) / 2.0);
            }
        } else {
            for (std::size_t i = 1; i < kMaxBins; ++i) {
                const auto p = i * v.size() / kMaxBins;
                const double t = v[p - 1] + (v[p] - v[p - 1]) / 2.0;
                if (thr.empty() || t > thr.back()) {
                    thr.push_back(t);
                }
            }
        }
        for (std::size_t r = 0; r < x.rows; ++r) {
            b.bins[r * x.cols + c] = static_cast<std::uint8_t>(
                std::lower_bound(thr.begin(), thr.end(), x(r, c)) - thr.begin());
        }
    }
    return b;
}

struct Grower {
    const Binned &binned;
    std::span<const std::uint8_t> y;
    std::size_t cols;
    std::size_t mtry;
    int max_depth;
    std::vector<std::uint32_t> idx;
    std::vector<double> weight;

    std::vector<RandomForest::Node> grow(std::uint64_t seed) {
        std::vector<RandomForest::Node> nodes;
        struct Task {
            std::int32_t node;
            std::size_t begin, end;
            int depth;
            std::uint64_t seed;
        };
        std::vector<Task> stack;
        nodes.push_back({});
        stack.push_back({0, 0, idx.size(), 0, seed});
        std::vector<std::size_t> features(cols);
        while (!stack.empty()) {
            const auto task = stack.back();
            stack.pop_back();
            double w[2] = {0, 0};
            for (auto p = task.begin; p < task.end; ++p) {
                w[y[idx[p]] ? 1 : 0] += weight[idx[p]];
            }
            const double total = w[0] + w[1];
            nodes[static_cast<std::size_t>(task.node)].value = total > 0 ? w[1] / total : 0.0;
            if (w[0] == 0 || w[1] == 0 || total < 2 || (max_depth > 0 && task.depth >= max_depth)) {
                continue;
            }
            Rng rng{task.seed};
            std::iota(features.begin(), features.end(), 0);
            const double parent = total - (w[0] * w[0] + w[1] * w[1]) / total;
            double best_gain = 1e-12;
            std::int32_t best_feature = -1;
            std::size_t best_bin = 0;
            std::size_t visited = 0;
            for (std::size_t f = 0; f < cols && visited < mtry; ++f) {
                std::swap(features[f], features[f + rng.below(cols - f)]);
                const auto feat = features[f];
                std::array<std::array<double, 2>, kMaxBins> hist{};
                std::uint8_t lo = 255, hi = 0;
                for (auto p = task.begin; p < task.end; ++p) {
                    const auto r = idx[p];
                    const auto bin = binned.bins[r * cols + feat];
                    hist[bin][y[r] ? 1 : 0] += weight[r];
                    lo = std::min(lo, bin);
                    hi = std::max(hi, bin);
                }
                if (lo == hi) {
                    continue;
                }
                ++visited;
                double l0 = 0, l1 = 0;
                for (std::size_t b = lo; b < hi; ++b) {
                    l0 += hist[b][0];
                    l1 += hist[b][1];
                    const double lt = l0 + l1;
                    const double r0 = w[0] - l0, r1 = w[1] - l1;
                    const double rt = r0 + r1;
                    if (lt <= 0 || rt <= 0) {
                        continue;
                    }
                    // Weighted Gini of children: lt*(1-sum p^2) + rt*(1-sum q^2).
                    const double child = lt - (l0 * l0 + l1 * l1) / lt + rt - (r0 * r0 + r1 * r1) / rt;
                    const double gain = parent - child;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<std::int32_t>(feat);
                        best_bin = b;
                    }
                }
            }
            if (best_feature < 0) {
                continue;
            }
            const auto feat = static_cast<std::size_t>(best_feature);
            const auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                                   idx.begin() + static_cast<std::ptrdiff_t>(task.end),
                                                   [&](std::uint32_t r) {
                                                       return binned.bins[r * cols + feat] <= best_bin;
                                                   }) -
                             idx.begin();
            auto &node = nodes[static_cast<std::size_t>(task.node)];
            node.feature = best_feature;
            node.threshold = binned.thresholds[feat][best_bin];
            const auto left = static_cast<std::int32_t>(nodes.size());
            node.left = left;
            node.right = left + 1;
            nodes.push_back({});
            nodes.push_back({});
            const auto m = static_cast<std::size_t>(mid);
            stack.push_back({left + 1, m, task.end, task.depth + 1, mix(task.seed ^ 0x2)});
            stack.push_back({left, task.begin, m, task.depth + 1, mix(task.seed ^ 0x1)});
        }
        return nodes;
    }
};

} // namespace

void RandomForest::fit(const Matrix &x, std::span<const std::uint8_t> y, int n_trees, std::uint64_t seed,
                       int max_depth) {
    if (x.rows == 0 || x.rows != y.size() || n_trees < 1) {
        throw ValidationError("random forest needs rows, labels and at least one tree");
    }
    cols_ = x.cols;
    trees_.clear();
    const auto binned = bin_features(x);
    const auto mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols))));
    Grower g{binned, y, x.cols, mtry, max_depth, {}, std::vector<double>(x.rows)};
    for (int t = 0; t < n_trees; ++t) {
        const auto tree_seed = derive_seed(seed, "tree" + std::to_string(t));
        Rng rng{tree_seed};
        std::fill(g.weight.begin(), g.weight.end(), 0.0);
        for (std::size_t i = 0; i < x.rows; ++i) {
            g.weight[rng.below(x.rows)] += 1.0;
        }
        g.idx.clear();
        for (std::size_t i = 0; i < x.rows; ++i) {
            if (g.weight[i] > 0) {
                g.idx.push_back(static_cast<std::uint32_t>(i));
            }
        }
        trees_.push_back(g.grow(mix(tree_seed)));
    }
}

std::vector<double> RandomForest::predict_scores(const Matrix &q, int n_trees, int max_depth) const {
    if (q.cols != cols_) {
        throw ValidationError("random forest column mismatch");
    }
    const auto nt = std::min<std::size_t>(static_cast<std::size_t>(n_trees), trees_.size());
    std::vector<double> out(q.rows, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto &nodes = trees_[t];
        for (std::size_t r = 0; r < q.rows; ++r) {
            std::size_t n = 0;
            int depth = 0;
            while (nodes[n].feature >= 0 && (max_depth == 0 || depth < max_depth)) {
                n = static_cast<std::size_t>(q(r, static_cast<std::size_t>(nodes[n].feature)) <= nodes[n].threshold
                                                 ? nodes[n].left
                                                 : nodes[n].right);
                ++depth;
            }
            out[r] += nodes[n].value;
        }
    }
    for (auto &v : out) {
        v /= static_cast<double>(nt);
    }
    return out;
}

void RandomForest::set_trees(std::vector<std::vector<Node>> trees, std::size_t cols) {
    trees_ = std::move(trees);
    cols_ = cols;
}

RandomForest RandomForest::truncated(int n_trees, int max_depth) const {
    RandomForest f;
    f.cols_ = cols_;
    const auto nt = std::min<std::size_t>(static_cast<std::size_t>(n_trees), trees_.size());
    for (std::size_t t = 0; t < nt; ++t) {
        const auto &src = trees_[t];
        std::vector<Node> dst;
        struct Item {
            std::size_t src;
            std::size_t dst;
            int depth;
        };
        std::vector<Item> queue{{0, 0, 0}};
        dst.push_back(src[0]);
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const auto it = queue[q];
            auto node = src[it.src];
            if (node.feature < 0 || (max_depth > 0 && it.depth >= max_depth)) {
                dst[it.dst] = {-1, 0, -1, -1, node.value};
                continue;
            }
            const auto l = dst.size();
            dst.push_back(src[static_cast<std::size_t>(node.left)]);
            dst.push_back(src[static_cast<std::size_t>(node.right)]);
            dst[it.dst].left = static_cast<std::int32_t>(l);
            dst[it.dst].right = static_cast<std::int32_t>(l + 1);
            queue.push_back({static_cast<std::size_t>(node.left), l, it.depth + 1});
            queue.push_back({static_cast<std::size_t>(node.right), l + 1, it.depth + 1});
        }
        f.trees_.push_back(std::move(dst));
    }
    return f;
}

nlohmann::json RandomForest::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto &t : trees_) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto &n : t) {
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        }
        trees.push_back(std::move(nodes));
    }
    return {{"cols", cols_}, {"trees", std::move(trees)}};
}

// ---- dispatch

std::vector<double> FittedModel::predict_scores(const Matrix &q) const {
    switch (kind) {
    case ModelKind::Knn: return knn->predict_scores(q, static_cast<std::size_t>(hp.n_neighbors));
    case ModelKind::LogReg: return logreg->predict_scores(q);
    case ModelKind::LinearSvm: return linear_svm->predict_scores(q);
    case ModelKind::RbfSvm: return rbf_svm->predict_scores(q);
    case ModelKind::RandomForest: return forest->predict_scores(q, hp.n_estimators, hp.max_depth);
    }
    return {};
}

nlohmann::json FittedModel::to_json() const {
    nlohmann::json params;
    switch (kind) {
    case ModelKind::Knn: params = knn->to_json(); break;
    case ModelKind::LogReg: params = logreg->to_json(); break;
    case ModelKind::LinearSvm: params = linear_svm->to_json(); break;
    case ModelKind::RbfSvm: params = rbf_svm->to_json(); break;
    case ModelKind::RandomForest: params = forest->to_json(); break;
    }
    return {{"model", to_string(kind)},
            {"hyperparameters", ml::to_json(kind, hp)},
            {"converged", converged},
            {"parameters", std::move(params)}};
}

FittedModel fit_model(const Matrix &x, std::span<const std::uint8_t> y, ModelKind kind, const HyperParams &hp,
                      std::uint64_t seed) {
    FittedModel m;
    m.kind = kind;
    m.hp = hp;
    switch (kind) {
    case ModelKind::Knn: {
        auto k = std::make_shared<KnnModel>();
        k->fit(x, y);
        m.knn = std::move(k);
        break;
    }
    case ModelKind::LogReg: {
        auto k = std::make_shared<LogisticModel>();
        k->fit(x, y, hp.c);
        m.converged = k->converged();
        m.logreg = std::move(k);
        break;
    }
    case ModelKind::LinearSvm: {
        auto k = std::make_shared<LinearSvmModel>();
        k->fit(x, y, hp.c, hp.squared_hinge, seed);
        m.converged = k->converged();
        m.linear_svm = std::move(k);
        break;
    }
    case ModelKind::RbfSvm: {
        auto k = std::make_shared<RbfSvmModel>();
        k->fit(x, y, hp.c, rbf_kernel(x, default_gamma(x)));
        m.converged = k->converged();
        m.rbf_svm = std::move(k);
        break;
    }
    case ModelKind::RandomForest: {
        auto k = std::make_shared<RandomForest>();
        k->fit(x, y, hp.n_estimators, seed, hp.max_depth);
        m.forest = std::move(k);
        break;
    }
    }
    return m;
}

} // namespace kdfe::ml
