#include "kdfe/dsl/feature_code.hpp"
#include "kdfe/dsl/registry.hpp"
#include "kdfe/error.hpp"
#include "kdfe/harness/harness.hpp"
#include "kdfe/synth/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace kdfe;

namespace {

// Grid warnings repeat per cell and fold; print each distinct message once.
void warn(const std::string &msg) {
    static std::mutex mu;
    static std::set<std::string> seen;
    const auto colon = msg.find(": ");
    const auto body = colon == std::string::npos ? msg : msg.substr(colon + 2);
    std::lock_guard lock{mu};
    if (seen.insert(body).second) {
        std::cerr << "warning: " << msg << '\n';
    }
}

nlohmann::json read_manifest(const fs::path &run) {
    nlohmann::json m = nlohmann::json::object();
    if (std::ifstream in{run / "manifest.json"}; in) {
        in >> m;
    }
    return m;
}

void record_step(const fs::path &run, const std::string &step, nlohmann::json info) {
    fs::create_directories(run);
    auto m = read_manifest(run);
    m["tool"] = "kdfe";
    m["steps"][step] = std::move(info);
    std::ofstream out{run / "manifest.json"};
    out << m.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss{s};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"aKDFE feature engineering and evaluation"};
    app.require_subcommand(1);

    std::string config_path, synth_out = "data";
    std::optional<std::uint64_t> synth_seed;
    std::optional<int> synth_n;
    bool synth_null = false;
    auto *synth = app.add_subcommand("synth", "generate a synthetic cohort");
    synth->add_option("--config", config_path, "SynthConfig JSON");
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--seed", synth_seed, "override the config seed");
    synth->add_option("--n", synth_n, "override n_patients");
    synth->add_flag("--null", synth_null, "zero every signal knob");

    std::string in_dir = "data", run_dir = "run";
    harness::BuildOptions build_opts;
    auto *build = app.add_subcommand("build-features", "build the six feature sets");
    build->add_option("--in", in_dir, "directory written by synth")->required();
    build->add_option("--run-dir,--out", run_dir, "run directory");
    build->add_option("--window", build_opts.window_days, "risk window in days");
    build->add_option("--ngram", build_opts.ngram, "n-gram length");
    build->add_option("--limit", build_opts.step1_limit, "features kept per step-one stage");

    std::string exp_list = "all";
    std::uint64_t seed = 42;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::size_t row_cap = 4000;
    std::string group_filter;
    auto *run = app.add_subcommand("run", "run the evaluation grid");
    run->add_option("--run-dir", run_dir, "run directory");
    run->add_option("--experiments", exp_list, "comma list or 'all'");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    run->add_option("--event-row-cap", row_cap, "row cap for event-format matrices (0 = none)");
    run->add_option("--group", group_filter, "EVENT or PCD only");

    auto *hyp = app.add_subcommand("test-hypotheses", "ANOVA sub-hypothesis tests");
    hyp->add_option("--run-dir", run_dir, "run directory");
    double alpha = 0.05;
    hyp->add_option("--alpha", alpha, "significance level");

    std::string formats = "md,csv";
    auto *report = app.add_subcommand("report", "write the report bundle");
    report->add_option("--run-dir", run_dir, "run directory");
    report->add_option("--format", formats, "md, csv or both");

    std::string code, registry_path;
    auto *decode = app.add_subcommand("decode", "describe a feature code");
    decode->add_option("code", code, "feature code")->required();
    decode->add_option("--registry", registry_path, "registry JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const fs::path rd{run_dir};
        if (synth->parsed()) {
            auto cfg = config_path.empty() ? synth::SynthConfig{} : synth::SynthConfig::load(config_path);
            if (synth_seed) {
                cfg.seed = *synth_seed;
            }
            if (synth_n) {
                cfg.n_patients = *synth_n;
            }
            if (synth_null) {
                cfg = cfg.null_model();
            }
            cfg.validate();
            const auto d = synth::generate(cfg);
            synth::write_synth(d, synth_out);
            std::cout << "wrote " << d.roster.size() << " patients, " << d.events.size() << " events to "
                      << synth_out << '\n';
        } else if (build->parsed()) {
            build_opts.warn = warn;
            const auto input = harness::load_input(in_dir);
            const auto f = harness::build_feature_sets(input, build_opts);
            harness::save_feature_sets(f, (rd / "features").string());
            record_step(rd, "build-features",
                        {{"input", fs::absolute(in_dir).string()},
                         {"window_days", build_opts.window_days},
                         {"ngram", build_opts.ngram},
                         {"step1_limit", build_opts.step1_limit},
                         {"pairwise_top", build_opts.pairwise_top},
                         {"summary", f.summary}});
            std::cout << f.summary.dump(2) << '\n';
        } else if (run->parsed()) {
            const auto f = harness::load_feature_sets((rd / "features").string());
            harness::RunOptions opts;
            opts.seed = seed;
            opts.jobs = jobs;
            opts.event_row_cap = row_cap;
            opts.grid.warn = warn;
            if (exp_list != "all") {
                opts.experiments = split_list(exp_list);
            }
            if (!group_filter.empty()) {
                const auto g = ml::parse_group(group_filter);
                const auto base = opts.experiments;
                opts.experiments.clear();
                for (const auto &s : harness::experiments()) {
                    const bool listed = base.empty() || std::find(base.begin(), base.end(), s.name) != base.end();
                    if (listed && s.group == g) {
                        opts.experiments.push_back(s.name);
                    }
                }
            }
            const auto results = harness::run_experiments(f, opts);
            harness::save_results(results, (rd / "results").string());
            nlohmann::json info{{"seed", seed}, {"jobs", jobs}, {"event_row_cap", row_cap}};
            std::size_t total = 0, failed = 0;
            for (const auto &r : results) {
                total += r.records.size();
                for (const auto &rec : r.records) {
                    failed += rec.failed;
                }
                info["experiments"][r.name] = {{"records", r.records.size()}, {"rows", r.rows}, {"columns", r.columns}};
                std::cout << r.name << ": " << r.records.size() << " records, " << r.rows << " rows, "
                          << r.seconds << " s\n";
            }
            info["records"] = total;
            info["failed"] = failed;
            record_step(rd, "run", info);
            std::cout << total << " records (" << failed << " failed)\n";
        } else if (hyp->parsed()) {
            const auto results = harness::load_results((rd / "results").string());
            const auto h = harness::test_hypotheses(results, alpha);
            fs::create_directories(rd / "hypotheses");
            std::ofstream j{rd / "hypotheses" / "hypotheses.json"};
            j << harness::hypotheses_to_json(h).dump(1) << '\n';
            std::ofstream c{rd / "hypotheses" / "hypotheses.csv"};
            harness::write_hypotheses_csv(c, h);
            harness::write_hypotheses_csv(std::cout, h);
            record_step(rd, "test-hypotheses", {{"alpha", alpha}, {"count", h.size()}});
        } else if (report->parsed()) {
            harness::ReportFormats fm{false, false};
            for (const auto &x : split_list(formats)) {
                if (x == "md") {
                    fm.markdown = true;
                } else if (x == "csv") {
                    fm.csv = true;
                } else {
                    throw ValidationError("unknown report format '" + x + "'");
                }
            }
            const auto results = harness::load_results((rd / "results").string());
            const auto f = harness::load_feature_sets((rd / "features").string());
            std::vector<harness::HypothesisResult> h;
            try {
                h = harness::test_hypotheses(results);
            } catch (const ValidationError &e) {
                warn(std::string{"hypothesis table omitted: "} + e.what());
            }
            harness::write_report(results, h, f, (rd / "report").string(), fm);
            record_step(rd, "report", {{"formats", formats}});
            std::cout << "report written to " << (rd / "report").string() << '\n';
        } else if (decode->parsed()) {
            const auto e = dsl::parse_feature_code(code);
            if (registry_path.empty()) {
                std::cout << dsl::describe_feature(e) << '\n';
            } else {
                std::cout << dsl::describe_feature(e, dsl::Registry::load(registry_path)) << '\n';
            }
        }
    } catch (const ValidationError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
