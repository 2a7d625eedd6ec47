// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is non-zero when any criterion fails.

#include "common/code_gen.hpp"
#include "common/f_oracle.hpp"
#include "common/gradient_check.hpp"
#include "common/risk_properties.hpp"

#include "kdfe/error.hpp"
#include "kdfe/harness/harness.hpp"
#include "kdfe/ml/grid.hpp"
#include "kdfe/stats/stats.hpp"
#include "kdfe/synth/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace kdfe;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

struct Options {
    int jobs{1};
    std::size_t full_n{2000};
    std::size_t direction_n{600};
    std::size_t direction_cap{1500};
    int direction_seeds{5};
    std::size_t null_n{300};
    std::size_t null_cap{800};
    int null_seeds{20};
    std::set<int> only;
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PipelineRun {
    harness::FeatureSets fs;
    std::vector<harness::ExperimentResult> results;
    double seconds{0};
};

harness::InputData to_input(const synth::SynthData &d) {
    harness::InputData in;
    in.with = sort_events(d.events);
    in.without = sort_events(project_to_track(d.events, Track::WithoutJanusmed));
    in.outcomes = d.outcomes;
    in.risk = d.risk_table;
    return in;
}

PipelineRun run_pipeline(const synth::SynthConfig &cfg, std::size_t cap, std::uint64_t seed, int jobs) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineRun r;
    r.fs = harness::build_feature_sets(to_input(synth::generate(cfg)));
    harness::RunOptions o;
    o.seed = seed;
    o.jobs = jobs;
    o.event_row_cap = cap;
    r.results = harness::run_experiments(r.fs, o);
    r.seconds = seconds_since(t0);
    return r;
}

double best_auroc(const harness::ExperimentResult &e) {
    double best = 0;
    for (const auto &r : e.records) {
        if (!r.failed && std::isfinite(r.metrics.auroc)) {
            best = std::max(best, r.metrics.auroc);
        }
    }
    return best;
}

const harness::ExperimentResult &by_name(const std::vector<harness::ExperimentResult> &rs, const std::string &n) {
    for (const auto &r : rs) {
        if (r.name == n) {
            return r;
        }
    }
    throw std::runtime_error("missing experiment " + n);
}

const harness::HypothesisResult &hyp(const std::vector<harness::HypothesisResult> &hs, const std::string &id) {
    for (const auto &h : hs) {
        if (h.id == id) {
            return h;
        }
    }
    throw std::runtime_error("missing hypothesis " + id);
}

// ---------------------------------------------------------------------------

Outcome grid_cardinality(const PipelineRun &run, int jobs) {
    std::size_t total = 0;
    bool shapes = true;
    std::ostringstream per;
    for (const auto &e : run.results) {
        const auto want = e.group == ml::Group::Event ? 24u : 72u;
        shapes = shapes && e.records.size() == want;
        total += e.records.size();
        per << ' ' << e.name << '=' << e.records.size();
    }
    const bool fast = run.seconds < 600;
    return {shapes && total == 240 && run.results.size() == 6 && fast,
            std::to_string(total) + " records (want 240);" + per.str() + "; wall " + fmt(run.seconds, 4) +
                " s (limit 600 s) with " + std::to_string(jobs) + " job(s)"};
}

Outcome auroc_oracle() {
    std::mt19937 rng{2718};
    double worst = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 2 + rng() % 49;
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng() % 3 == 0 ? static_cast<double>(rng() % 5) / 5.0 : std::uniform_real_distribution<>{}(rng);
            y[i] = static_cast<std::uint8_t>(i == 0 ? 0 : i == 1 ? 1 : rng() % 2);
        }
        double num = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (y[i] == 1 && y[j] == 0) {
                    num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                    pairs += 1;
                }
            }
        }
        const double oracle = num / pairs;
        worst = std::max(worst, std::abs(ml::compute_metrics(s, y).auroc - oracle));
        worst = std::max(worst, std::abs(ml::auroc(s, y) - oracle));
    }
    return {worst <= 1e-9, "max |pipeline - pair count| = " + fmt(worst, 3) + " over 200 instances (tol 1e-9)"};
}

Outcome anova_oracle() {
    std::mt19937 rng{31};
    std::normal_distribution<> n01;
    double worst_f = 0, worst_t = 0;
    for (int t = 0; t < 500; ++t) {
        std::vector<std::vector<double>> g(2 + rng() % 3);
        for (auto &grp : g) {
            grp.resize(2 + rng() % 20);
            const double shift = n01(rng);
            for (auto &v : grp) {
                v = n01(rng) + shift;
            }
        }
        const auto r = stats::anova_f(g);
        double grand = 0, n = 0;
        for (const auto &grp : g) {
            for (double v : grp) {
                grand += v;
                n += 1;
            }
        }
        grand /= n;
        double ssb = 0, ssw = 0;
        for (const auto &grp : g) {
            double m = 0;
            for (double v : grp) {
                m += v;
            }
            m /= static_cast<double>(grp.size());
            ssb += static_cast<double>(grp.size()) * (m - grand) * (m - grand);
            for (double v : grp) {
                ssw += (v - m) * (v - m);
            }
        }
        const double k = static_cast<double>(g.size());
        const double f = (ssb / (k - 1)) / (ssw / (n - k));
        worst_f = std::max(worst_f, std::abs(r.f - f) / std::max(1.0, f));
        if (g.size() == 2) {
            const double tt = stats::two_sample_t(g[0], g[1]);
            worst_t = std::max(worst_t, std::abs(r.f - tt * tt) / std::max(1.0, r.f));
        }
    }
    const std::vector<std::vector<double>> ex{{1, 2, 3}, {4, 5, 6}};
    const auto r = stats::anova_f(ex);
    const double oracle_p = testing::f_survival_by_integration(13.5, 1, 4);
    const bool ok = worst_f <= 1e-9 && worst_t <= 1e-9 && std::abs(r.f - 13.5) <= 1e-9 &&
                    std::abs(r.p - 0.0213) <= 1e-3 && std::abs(r.p - oracle_p) <= 1e-3;
    return {ok, "F vs sum of squares rel err " + fmt(worst_f, 3) + ", F vs t^2 " + fmt(worst_t, 3) +
                    " (tol 1e-9); F(1,4)=" + fmt(r.f, 6) + " p=" + fmt(r.p, 5) + " integration oracle " +
                    fmt(oracle_p, 5) + " (want 0.0213 +- 1e-3)"};
}

Outcome parser_round_trip() {
    std::size_t printed_ok = 0;
    for (const auto &code : testing::codes::printed()) {
        const auto e = dsl::parse_feature_code(code);
        printed_ok += dsl::render_feature_code(e) == code && dsl::parse_feature_code(code) == e;
    }
    std::mt19937 rng{4242};
    std::size_t generated_ok = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto e = dsl::make_expr(testing::codes::random_terms(rng));
        const auto text = dsl::render_feature_code(e);
        const auto back = dsl::parse_feature_code(text);
        generated_ok += back == e && dsl::render_feature_code(back) == text;
    }
    std::size_t typed = 0;
    for (const auto &[code, unknown] : testing::codes::invalid()) {
        try {
            dsl::parse_feature_code(code);
        } catch (const UnknownOpcodeError &) {
            typed += unknown;
        } catch (const SyntaxError &) {
            typed += !unknown;
        } catch (...) {
        }
    }
    const auto n_printed = testing::codes::printed().size();
    const auto n_invalid = testing::codes::invalid().size();
    return {printed_ok == n_printed && generated_ok == 10000 && typed == n_invalid,
            std::to_string(printed_ok) + "/" + std::to_string(n_printed) + " printed, " +
                std::to_string(generated_ok) + "/10000 generated round trips; " + std::to_string(typed) + "/" +
                std::to_string(n_invalid) + " invalid codes raised the expected typed error"};
}

Outcome ngram_conservation(const harness::FeatureSets &fs) {
    std::size_t patients = 0, bad = 0;
    for (int track = 0; track < 2; ++track) {
        const auto &pcd = track ? fs.pcd2 : fs.pcd1;
        const auto &akd = track ? fs.akdfe2 : fs.akdfe1;
        std::map<std::string, double> events;
        for (const auto &r : akd.rows) {
            events[r.patient_id] += 1;
        }
        const auto *total = pcd.column("FC_TOTAL");
        if (!total) {
            return {false, "FC_TOTAL column missing"};
        }
        for (std::size_t i = 0; i < pcd.rows(); ++i) {
            double sum = 0;
            for (const auto &c : pcd.columns) {
                if (c.kind == akdfe::ColumnKind::Count) {
                    sum += c.values[i].value_or(-1e18);
                }
            }
            const double n = events[pcd.patients[i]];
            bad += !(sum == n && total->values[i] && *total->values[i] == n);
            ++patients;
        }
    }
    return {bad == 0 && patients == 2 * fs.outcomes.size(),
            std::to_string(patients - bad) + "/" + std::to_string(patients) +
                " patient rows conserve counts across both PCD sets (exact)"};
}

Outcome direction(const Options &opt) {
    int replicated = 0;
    std::ostringstream d;
    for (int s = 1; s <= opt.direction_seeds; ++s) {
        synth::SynthConfig cfg;
        cfg.n_patients = static_cast<int>(opt.direction_n);
        cfg.seed = static_cast<std::uint64_t>(s);
        const auto run = run_pipeline(cfg, opt.direction_cap, static_cast<std::uint64_t>(s), opt.jobs);
        const auto hs = harness::test_hypotheses(run.results);
        const double p1 = best_auroc(by_name(run.results, "E1-PCD-aKDFE"));
        const double p2 = best_auroc(by_name(run.results, "E2-PCD-aKDFE"));
        double ev = 0;
        for (const auto &e : run.results) {
            if (e.group == ml::Group::Event) {
                ev = std::max(ev, best_auroc(e));
            }
        }
        const auto &h13 = hyp(hs, "H1.3");
        const auto &h14 = hyp(hs, "H1.4");
        const bool ok = p1 >= 0.95 && p2 >= 0.95 && ev < std::min(p1, p2) && h13.reject && h14.reject &&
                        h13.anova.p < 0.05 && h14.anova.p < 0.05;
        const double mean_a = std::accumulate(h13.a.begin(), h13.a.end(), 0.0) / static_cast<double>(h13.a.size());
        const double mean_b = std::accumulate(h13.b.begin(), h13.b.end(), 0.0) / static_cast<double>(h13.b.size());
        const bool sign = mean_a > mean_b;
        replicated += ok && sign;
        d << " seed " << s << ": best PCD " << fmt(p1, 3) << "/" << fmt(p2, 3) << " best event " << fmt(ev, 3)
          << " p(H1.3)=" << fmt(h13.anova.p, 2) << " p(H1.4)=" << fmt(h14.anova.p, 2) << (ok && sign ? " ok;" : " no;");
    }
    return {replicated * 5 >= 4 * opt.direction_seeds,
            std::to_string(replicated) + "/" + std::to_string(opt.direction_seeds) +
                " seeds replicate (need >= 4/5; PCD >= 0.95, event lower, p < 0.05);" + d.str()};
}

Outcome null_h2(const Options &opt) {
    std::map<std::string, int> accepted;
    int runs = 0;
    for (int s = 1; s <= opt.null_seeds; ++s) {
        synth::SynthConfig cfg;
        cfg.n_patients = static_cast<int>(opt.null_n);
        cfg.seed = static_cast<std::uint64_t>(s);
        cfg.risk_score_effect = 0;
        const auto run = run_pipeline(cfg, opt.null_cap, static_cast<std::uint64_t>(s), opt.jobs);
        const auto hs = harness::test_hypotheses(run.results);
        for (const auto *id : {"H2.1", "H2.2", "H2.3"}) {
            accepted[id] += hyp(hs, id).anova.p > 0.05;
        }
        ++runs;
    }
    bool ok = true;
    std::ostringstream d;
    for (const auto &[id, n] : accepted) {
        ok = ok && n * 10 >= 9 * runs;
        d << ' ' << id << " not rejected in " << n << "/" << runs << ";";
    }
    return {ok, "need >= 90% per hypothesis;" + d.str()};
}

Outcome no_leakage(const Options &opt) {
    synth::SynthConfig cfg;
    cfg.n_patients = static_cast<int>(opt.null_n);
    cfg.seed = 8;
    const auto fs = harness::build_feature_sets(to_input(synth::generate(cfg)));
    harness::RunOptions ro;
    ro.event_row_cap = opt.null_cap;
    std::size_t cells = 0, identical = 0;
    for (const auto *name : {"E2-EVENT", "E2-PCD-aKDFE"}) {
        const auto &spec = harness::find_experiment(name);
        const auto m = harness::experiment_matrix(fs, spec, ro);
        const auto split = ml::grid_split(m, ro.seed);
        auto poisoned = m;
        for (auto i : split.test) {
            poisoned.y[i] = static_cast<std::uint8_t>(1 - poisoned.y[i]);
        }
        for (const auto &c : ml::grid_configs(spec.group, ro.seed)) {
            const auto a = ml::run_cell(m, split, c);
            const auto b = ml::run_cell(poisoned, split, c);
            ++cells;
            if (!a.pipeline || !b.pipeline) {
                continue;
            }
            auto ra = a.record.to_json();
            auto rb = b.record.to_json();
            ra.erase("metrics");
            rb.erase("metrics");
            identical += a.pipeline->to_json().dump() == b.pipeline->to_json().dump() && ra == rb;
        }
    }
    return {identical == cells && cells == 96,
            std::to_string(identical) + "/" + std::to_string(cells) +
                " cells have byte-identical serialized transforms, scores, selection and models after flipping "
                "every test label"};
}

Outcome null_calibration(const PipelineRun &run) {
    std::size_t inside = 0, total = 0;
    double lo = 1, hi = 0;
    for (const auto &e : run.results) {
        for (const auto &r : e.records) {
            ++total;
            if (!r.failed && r.metrics.auroc >= 0.4 && r.metrics.auroc <= 0.6) {
                ++inside;
            }
            if (!r.failed) {
                lo = std::min(lo, r.metrics.auroc);
                hi = std::max(hi, r.metrics.auroc);
            }
        }
    }
    const double frac = total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
    return {frac >= 0.95, std::to_string(inside) + "/" + std::to_string(total) + " cells (" + fmt(100 * frac, 4) +
                              "%) with AUROC in [0.4, 0.6] (need >= 95%); range " + fmt(lo, 3) + ".." + fmt(hi, 3)};
}

Outcome gradients() {
    std::mt19937 rng{10};
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        const auto p = testing::gradcheck::random_problem(rng, 40, 5);
        worst = std::max(worst, testing::gradcheck::logistic_error(p, 0.5));
        worst = std::max(worst, testing::gradcheck::svm_error(p, 1.0, true));
        worst = std::max(worst, testing::gradcheck::svm_error(p, 1.0, false));
    }
    return {worst < 1e-4, "max relative error " + fmt(worst, 3) +
                              " over 20 points x {logistic, squared hinge, hinge} (tol 1e-4)"};
}

Outcome risk_window() {
    std::mt19937 rng{1201};
    int ok = 0;
    std::string first_failure;
    for (int i = 0; i < 1000; ++i) {
        auto msg = testing::risk_props::check_boundary(rng);
        if (msg.empty()) {
            msg = testing::risk_props::check_timeline(testing::risk_props::random_timeline(rng), rng);
        }
        if (msg.empty()) {
            ++ok;
        } else if (first_failure.empty()) {
            first_failure = msg;
        }
    }
    return {ok == 1000, std::to_string(ok) + "/1000 timelines pass the 120/121-day boundary, brute-force daily "
                                             "levels, translation invariance and monotonicity" +
                            (first_failure.empty() ? "" : "; first failure: " + first_failure)};
}

} // namespace

int main(int argc, char **argv) {
    Options opt;
    opt.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    CLI::App app{"acceptance criteria"};
    app.add_option("--jobs", opt.jobs);
    app.add_option("--only", opt.only, "criterion numbers to run");
    app.add_option("--null-seeds", opt.null_seeds);
    app.add_option("--direction-seeds", opt.direction_seeds);
    CLI11_PARSE(app, argc, argv);

    int failures = 0;
    auto report = [&](int id, const std::function<Outcome()> &fn) {
        if (!opt.only.empty() && !opt.only.count(id)) {
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string{"exception: "} + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << " ["
                  << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    };

    report(2, auroc_oracle);
    report(3, anova_oracle);
    report(4, parser_round_trip);
    report(10, gradients);
    report(11, risk_window);

    std::optional<PipelineRun> full;
    auto full_run = [&]() -> const PipelineRun & {
        if (!full) {
            synth::SynthConfig cfg;
            cfg.n_patients = static_cast<int>(opt.full_n);
            full = run_pipeline(cfg, 4000, 42, opt.jobs);
        }
        return *full;
    };
    report(1, [&] { return grid_cardinality(full_run(), opt.jobs); });
    report(5, [&] { return ngram_conservation(full_run().fs); });
    full.reset();
    report(8, [&] { return no_leakage(opt); });
    report(9, [&] {
        synth::SynthConfig cfg;
        cfg.n_patients = static_cast<int>(opt.full_n);
        return null_calibration(run_pipeline(cfg.null_model(), 4000, 42, opt.jobs));
    });
    report(6, [&] { return direction(opt); });
    report(7, [&] { return null_h2(opt); });

    std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " criterion failure(s)" << std::endl;
    return failures ? 1 : 0;
}
