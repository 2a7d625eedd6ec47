#include "kdfe/ml/grid.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"
#include "kdfe/seed.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace kdfe::ml {

std::string_view to_string(Group g) noexcept { return g == Group::Event ? "EVENT" : "PCD"; }

Group parse_group(std::string_view s) {
    if (s == "EVENT" || s == "event") {
        return Group::Event;
    }
    if (s == "PCD" || s == "pcd") {
        return Group::Pcd;
    }
    throw ValidationError("unknown experiment group '" + std::string{s} + "'");
}

std::string PipelineConfig::key() const {
    std::string k;
    k.append(ml::to_string(imputation)).append("/");
    k.append(ml::to_string(balancing)).append("/");
    k.append(ml::to_string(scorer)).append("/");
    k.append(ml::to_string(model));
    return k;
}

nlohmann::json PipelineConfig::to_json() const {
    return {{"imputation", ml::to_string(imputation)},
            {"balancing", ml::to_string(balancing)},
            {"scorer", ml::to_string(scorer)},
            {"model", ml::to_string(model)},
            {"master_seed", master_seed}};
}

std::vector<PipelineConfig> grid_configs(Group g, std::uint64_t master_seed) {
    std::vector<Balancing> balancers{Balancing::Smote, Balancing::Adasyn};
    std::vector<Scorer> scorers{Scorer::AnovaF, Scorer::Chi2};
    std::vector<ModelKind> models{ModelKind::Knn, ModelKind::LogReg, ModelKind::LinearSvm};
    if (g == Group::Pcd) {
        balancers.push_back(Balancing::None);
        scorers.push_back(Scorer::MutualInfo);
        models = {ModelKind::Knn, ModelKind::LogReg, ModelKind::RbfSvm, ModelKind::RandomForest};
    }
    std::vector<PipelineConfig> out;
    for (auto imp : {Imputation::Mean, Imputation::Median}) {
        for (auto bal : balancers) {
            for (auto sc : scorers) {
                for (auto mo : models) {
                    out.push_back({imp, bal, sc, mo, master_seed});
                }
            }
        }
    }
    return out;
}

nlohmann::json ResultRecord::to_json() const {
    nlohmann::json j{{"config", config.to_json()}, {"failed", failed}};
    if (failed) {
        j["error"] = error;
        return j;
    }
    j["metrics"] = metrics.to_json();
    j["k"] = k;
    j["hyperparameters"] = ml::to_json(config.model, hp);
    j["selected"] = selected;
    j["cv_accuracy"] = cv_accuracy;
    j["converged"] = converged;
    return j;
}

ResultRecord ResultRecord::from_json(const nlohmann::json &j) {
    ResultRecord r;
    try {
        const auto &c = j.at("config");
        r.config.imputation = parse_imputation(c.at("imputation").get<std::string>());
        r.config.balancing = parse_balancing(c.at("balancing").get<std::string>());
        r.config.scorer = parse_scorer(c.at("scorer").get<std::string>());
        r.config.model = parse_model(c.at("model").get<std::string>());
        r.config.master_seed = c.at("master_seed").get<std::uint64_t>();
        r.failed = j.at("failed").get<bool>();
        if (r.failed) {
            r.error = j.value("error", "");
            return r;
        }
        const auto &m = j.at("metrics");
        r.metrics = {m.at("accuracy"), m.at("precision"), m.at("recall"), m.at("f1"),
                     m.at("auroc"),    m.at("log_loss"),  m.at("brier")};
        r.k = j.at("k").get<std::size_t>();
        const auto &h = j.at("hyperparameters");
        if (h.contains("n_neighbors")) {
            r.hp.n_neighbors = h.at("n_neighbors");
        }
        if (h.contains("C")) {
            r.hp.c = h.at("C");
        }
        if (h.contains("loss")) {
            r.hp.squared_hinge = h.at("loss") == "squared_hinge";
        }
        if (h.contains("n_estimators")) {
            r.hp.n_estimators = h.at("n_estimators");
            r.hp.max_depth = h.at("max_depth").is_null() ? 0 : h.at("max_depth").get<int>();
        }
        r.selected = j.at("selected").get<std::vector<std::string>>();
        r.cv_accuracy = j.at("cv_accuracy");
        r.converged = j.at("converged");
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string{"malformed result record: "} + e.what());
    }
    return r;
}

std::vector<double> FittedPipeline::predict_scores(const RawMatrix &m) const {
    auto x = encoder.transform(m);
    imputer.transform(x);
    scaler.transform(x);
    return model.predict_scores(x.select_cols(selected));
}

nlohmann::json FittedPipeline::to_json() const {
    return {{"config", config.to_json()},         {"encoder", encoder.to_json()},
            {"imputer", imputer.to_json()},       {"scaler", scaler.to_json()},
            {"feature_scores", feature_scores},   {"selected", selected},
            {"model", model.to_json()}};
}

Split grid_split(const RawMatrix &m, std::uint64_t master_seed, double train_ratio) {
    return stratified_split(m.y, m.groups, train_ratio, derive_seed(master_seed, "split"));
}

namespace {

struct Stage {
    Matrix x;
    std::vector<std::uint8_t> y;
    Matrix vx;
    std::vector<std::uint8_t> vy;
};

struct Prepared {
    std::vector<Stage> folds;
    Stage full;
    Encoder encoder;
    Imputer imputer;
    MinMaxScaler scaler;
};

Stage preprocess(const RawMatrix &train, const RawMatrix &held_out, Imputation imp, Balancing bal,
                 std::uint64_t seed, const GridOptions &opts, Encoder &enc, Imputer &imputer,
                 MinMaxScaler &scaler) {
    enc.fit(train, opts.cardinality_threshold);
    auto x = enc.transform(train);
    auto vx = enc.transform(held_out);
    imputer.fit(x, imp);
    imputer.transform(x);
    imputer.transform(vx);
    scaler.fit(x);
    scaler.transform(x);
    scaler.transform(vx);
    auto balanced = oversample(x, train.y, bal, seed, opts.warn);
    return {std::move(balanced.x), std::move(balanced.y), std::move(vx), held_out.y};
}

Prepared prepare(const RawMatrix &m, const Split &split, Imputation imp, Balancing bal, std::uint64_t master,
                 const GridOptions &opts) {
    const auto train = m.subset(split.train);
    const auto test = m.subset(split.test);
    const auto folds = stratified_folds(train.y, train.groups, opts.folds, derive_seed(master, "cv"));
    const std::string tag = "balance/" + std::string{to_string(imp)} + "/" + std::string{to_string(bal)};
    Prepared p;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<bool> in_val(train.rows(), false);
        for (auto i : folds[f]) {
            in_val[i] = true;
        }
        std::vector<std::size_t> tr;
        for (std::size_t i = 0; i < train.rows(); ++i) {
            if (!in_val[i]) {
                tr.push_back(i);
            }
        }
        Encoder e;
        Imputer im;
        MinMaxScaler sc;
        p.folds.push_back(preprocess(train.subset(tr), train.subset(folds[f]), imp, bal,
                                     derive_seed(master, tag + "/" + std::to_string(f)), opts, e, im, sc));
    }
    p.full = preprocess(train, test, imp, bal, derive_seed(master, tag + "/full"), opts, p.encoder, p.imputer,
                        p.scaler);
    return p;
}

double accuracy(std::span<const double> scores, std::span<const std::uint8_t> y) {
    double hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        hit += (scores[i] > 0.5) == (y[i] != 0);
    }
    return y.empty() ? 0.0 : hit / static_cast<double>(y.size());
}

// Validation accuracy for every point of the model's grid; shares work
// between grid points where the model allows it.
std::vector<double> evaluate_grid(ModelKind kind, const std::vector<HyperParams> &grid, const Matrix &x,
                                  std::span<const std::uint8_t> y, const Matrix &vx,
                                  std::span<const std::uint8_t> vy, std::uint64_t seed) {
    std::vector<double> acc;
    switch (kind) {
    case ModelKind::Knn: {
        KnnModel knn;
        knn.fit(x, y);
        std::size_t kmax = 0;
        for (const auto &h : grid) {
            kmax = std::max(kmax, static_cast<std::size_t>(h.n_neighbors));
        }
        const auto nbrs = knn.neighbours(vx, kmax);
        for (const auto &h : grid) {
            acc.push_back(accuracy(knn.scores(nbrs, static_cast<std::size_t>(h.n_neighbors)), vy));
        }
        break;
    }
    case ModelKind::RbfSvm: {
        const auto kernel = rbf_kernel(x, default_gamma(x));
        for (const auto &h : grid) {
            RbfSvmModel svm;
            svm.fit(x, y, h.c, kernel);
            acc.push_back(accuracy(svm.predict_scores(vx), vy));
        }
        break;
    }
    case ModelKind::RandomForest: {
        int trees = 0;
        for (const auto &h : grid) {
            trees = std::max(trees, h.n_estimators);
        }
        RandomForest forest;
        forest.fit(x, y, trees, seed);
        for (const auto &h : grid) {
            acc.push_back(accuracy(forest.predict_scores(vx, h.n_estimators, h.max_depth), vy));
        }
        break;
    }
    default:
        for (const auto &h : grid) {
            acc.push_back(accuracy(fit_model(x, y, kind, h, seed).predict_scores(vx), vy));
        }
    }
    return acc;
}

std::vector<std::size_t> prefix(const std::vector<std::size_t> &ranking, std::size_t k) {
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

struct Rankings {
    std::vector<std::vector<std::size_t>> folds;
    std::vector<double> full_scores;
    std::vector<std::size_t> full;
};

Rankings rank_all(const Prepared &p, Scorer scorer) {
    Rankings r;
    for (const auto &f : p.folds) {
        r.folds.push_back(rank_features(feature_scores(f.x, f.y, scorer)));
    }
    r.full_scores = feature_scores(p.full.x, p.full.y, scorer);
    r.full = rank_features(r.full_scores);
    return r;
}

CellOutcome evaluate_cell(const Prepared &p, const Rankings &rk, const PipelineConfig &cfg,
                          const GridOptions &opts) {
    CellOutcome out;
    auto &rec = out.record;
    rec.config = cfg;
    const auto grid = hyper_grid(cfg.model);
    const auto &kg = opts.k_grid;
    const auto cols = p.full.x.cols;
    for (auto k : kg) {
        if (k > cols && opts.warn) {
            opts.warn(cfg.key() + ": k = " + std::to_string(k) + " exceeds the " + std::to_string(cols) +
                      " available features; keeping all");
        }
    }
    std::vector<std::vector<double>> sum(kg.size(), std::vector<double>(grid.size(), 0.0));
    for (std::size_t f = 0; f < p.folds.size(); ++f) {
        const auto &fold = p.folds[f];
        const auto seed = derive_seed(cfg.master_seed, cfg.key() + "/fold" + std::to_string(f));
        for (std::size_t ki = 0; ki < kg.size(); ++ki) {
            const auto sel = prefix(rk.folds[f], kg[ki]);
            const auto acc = evaluate_grid(cfg.model, grid, fold.x.select_cols(sel), fold.y,
                                           fold.vx.select_cols(sel), fold.vy, seed);
            for (std::size_t h = 0; h < grid.size(); ++h) {
                sum[ki][h] += acc[h];
            }
        }
    }
    // Ties go to the smaller k, then to the earlier grid point.
    std::size_t best_k = 0, best_h = 0;
    double best = -1;
    for (std::size_t ki = 0; ki < kg.size(); ++ki) {
        for (std::size_t h = 0; h < grid.size(); ++h) {
            if (sum[ki][h] > best) {
                best = sum[ki][h];
                best_k = ki;
                best_h = h;
            }
        }
    }
    const auto sel = prefix(rk.full, kg[best_k]);
    auto model = fit_model(p.full.x.select_cols(sel), p.full.y, cfg.model, grid[best_h],
                           derive_seed(cfg.master_seed, cfg.key() + "/final"));
    const auto scores = model.predict_scores(p.full.vx.select_cols(sel));
    rec.metrics = compute_metrics(scores, p.full.vy);
    rec.k = kg[best_k];
    rec.hp = grid[best_h];
    rec.cv_accuracy = best / static_cast<double>(p.folds.size());
    rec.converged = model.converged;
    for (auto c : sel) {
        const auto &o = p.encoder.outputs()[c];
        // one-hot outputs carry their level so reports can decode them
        rec.selected.push_back(o.kind == Encoder::Kind::OneHot ? o.name + "=" + o.category : o.name);
    }
    out.pipeline = FittedPipeline{cfg, p.encoder, p.imputer, p.scaler, rk.full_scores, sel, std::move(model)};
    return out;
}

ResultRecord failed(const PipelineConfig &cfg, const std::string &msg) {
    ResultRecord r;
    r.config = cfg;
    r.failed = true;
    r.error = msg;
    return r;
}

} // namespace

CellOutcome run_cell(const RawMatrix &m, const Split &split, const PipelineConfig &cfg, const GridOptions &opts) {
    if (opts.before_cell) {
        opts.before_cell(cfg);
    }
    const auto p = prepare(m, split, cfg.imputation, cfg.balancing, cfg.master_seed, opts);
    return evaluate_cell(p, rank_all(p, cfg.scorer), cfg, opts);
}

std::vector<ResultRecord> run_cells(const RawMatrix &m, const Split &split,
                                    const std::vector<PipelineConfig> &configs, const GridOptions &opts) {
    m.validate();
    std::map<std::tuple<Imputation, Balancing, std::uint64_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto &c = configs[i];
        groups[{c.imputation, c.balancing, c.master_seed}].push_back(i);
    }
    std::vector<std::vector<std::size_t>> tasks;
    for (auto &[_, idx] : groups) {
        tasks.push_back(std::move(idx));
    }
    std::vector<ResultRecord> results(configs.size());
    auto run_group = [&](const std::vector<std::size_t> &idx) {
        const auto &first = configs[idx.front()];
        std::optional<Prepared> prepared;
        std::string prep_error;
        try {
            prepared = prepare(m, split, first.imputation, first.balancing, first.master_seed, opts);
        } catch (const std::exception &e) {
            prep_error = e.what();
        }
        std::map<Scorer, Rankings> rankings;
        for (auto i : idx) {
            const auto &cfg = configs[i];
            try {
                if (opts.before_cell) {
                    opts.before_cell(cfg);
                }
                if (!prepared) {
                    throw Error("preprocessing failed: " + prep_error);
                }
                auto it = rankings.find(cfg.scorer);
                if (it == rankings.end()) {
                    it = rankings.emplace(cfg.scorer, rank_all(*prepared, cfg.scorer)).first;
                }
                results[i] = evaluate_cell(*prepared, it->second, cfg, opts).record;
            } catch (const std::exception &e) {
                results[i] = failed(cfg, e.what());
            }
        }
    };
    const auto jobs = static_cast<std::size_t>(std::max(1, opts.jobs));
    if (jobs == 1 || tasks.size() == 1) {
        for (const auto &t : tasks) {
            run_group(t);
        }
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(jobs, tasks.size()); ++w) {
        pool.emplace_back([&] {
            for (auto t = next++; t < tasks.size(); t = next++) {
                run_group(tasks[t]);
            }
        });
    }
    for (auto &th : pool) {
        th.join();
    }
    return results;
}

std::vector<ResultRecord> run_grid(const RawMatrix &m, Group g, std::uint64_t master_seed,
                                   const GridOptions &opts) {
    m.validate();
    const auto split = grid_split(m, master_seed, opts.train_ratio);
    return run_cells(m, split, grid_configs(g, master_seed), opts);
}

void write_results_csv(std::ostream &out, const std::vector<ResultRecord> &records) {
    csv::write_row(out, {"IMPUTATION", "BALANCING", "SCORER", "MODEL", "STATUS", "ERROR", "K", "HYPERPARAMETERS",
                         "CV_ACCURACY", "ACCURACY", "PRECISION", "RECALL", "F1", "AUROC", "LOG_LOSS", "BRIER",
                         "SELECTED_FEATURES", "CONVERGED"});
    for (const auto &r : records) {
        csv::Row row{std::string{to_string(r.config.imputation)}, std::string{to_string(r.config.balancing)},
                     std::string{to_string(r.config.scorer)}, std::string{to_string(r.config.model)},
                     r.failed ? "FAILED" : "OK", r.error};
        if (r.failed) {
            row.resize(18);
        } else {
            std::string sel;
            for (std::size_t i = 0; i < r.selected.size(); ++i) {
                sel += (i ? ";" : "") + r.selected[i];
            }
            const auto &m = r.metrics;
            for (auto s : {std::to_string(r.k), describe(r.config.model, r.hp), csv::format_double(r.cv_accuracy),
                           csv::format_double(m.accuracy), csv::format_double(m.precision),
                           csv::format_double(m.recall), csv::format_double(m.f1), csv::format_double(m.auroc),
                           csv::format_double(m.log_loss), csv::format_double(m.brier), sel,
                           std::string{r.converged ? "1" : "0"}}) {
                row.push_back(s);
            }
        }
        csv::write_row(out, row);
    }
}

nlohmann::json results_to_json(const std::vector<ResultRecord> &records) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto &r : records) {
        a.push_back(r.to_json());
    }
    return a;
}

std::vector<ResultRecord> results_from_json(const nlohmann::json &j) {
    if (!j.is_array()) {
        throw ValidationError("result list must be a JSON array");
    }
    std::vector<ResultRecord> out;
    for (const auto &r : j) {
        out.push_back(ResultRecord::from_json(r));
    }
    return out;
}

} // namespace kdfe::ml
