#include "kdfe/harness/harness.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/dsl/registry.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace kdfe::harness {

namespace fs = std::filesystem;

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

int to_int(std::string_view s) { return static_cast<int>(csv::parse_int(s)); }

std::string describe_definition(const akdfe::EventAkdfeFeatureSet &set, int id) {
    const auto *def = set.find(id);
    if (!def) {
        return "feature " + std::to_string(id) + " (not in catalog)";
    }
    std::string text;
    try {
        text = dsl::describe_feature(def->expr);
    } catch (const Error &) {
        text = "undescribed";
    }
    return dsl::render_feature_code(def->expr) + " [" + text + "]";
}

bool second_track(const std::string &experiment) { return experiment.rfind("E2-", 0) == 0; }

} // namespace

std::string decode_column(const std::string &column, const FeatureSets &f, const std::string &experiment) {
    std::string name = column;
    std::string level;
    if (auto eq = column.find('='); eq != std::string::npos) {
        name = column.substr(0, eq);
        level = column.substr(eq + 1);
    }
    const auto &spec = find_experiment(experiment);
    const auto &set = second_track(experiment) ? f.akdfe2 : f.akdfe1;

    if (spec.feature_set == FeatureSetId::Pcd1 || spec.feature_set == FeatureSetId::Pcd2) {
        if (name == "FC_TOTAL") {
            return "number of feature events per patient";
        }
        if (name.rfind("FC", 0) == 0) {
            std::vector<std::string> parts;
            std::string_view rest{name};
            rest.remove_prefix(2);
            std::size_t start = 0;
            while (start <= rest.size()) {
                const auto us = rest.find('_', start);
                const auto tok = rest.substr(start, us == std::string_view::npos ? rest.size() - start : us - start);
                if (!all_digits(tok)) {
                    throw ValidationError("cannot decode column '" + column + "'");
                }
                parts.push_back(describe_definition(set, to_int(tok)));
                if (us == std::string_view::npos) {
                    break;
                }
                start = us + 1;
            }
            std::string out = parts.size() == 1 ? "count of " : "count of the sequence ";
            for (std::size_t i = 0; i < parts.size(); ++i) {
                out += (i ? " then " : "") + parts[i];
            }
            return out;
        }
        if (name.size() > 1 && name[0] == 'S' && all_digits(std::string_view{name}.substr(1))) {
            return "sum of values of " + describe_definition(set, to_int(std::string_view{name}.substr(1)));
        }
        throw ValidationError("cannot decode column '" + column + "'");
    }

    std::size_t digits = 0;
    while (digits < name.size() && std::isdigit(static_cast<unsigned char>(name[digits]))) {
        ++digits;
    }
    if (digits == 0) {
        throw ValidationError("cannot decode column '" + column + "'");
    }
    const int id = to_int(std::string_view{name}.substr(0, digits));
    const bool akdfe = spec.feature_set == FeatureSetId::Akdfe1 || spec.feature_set == FeatureSetId::Akdfe2;
    if (akdfe && id == 2) {
        if (level.empty() || level == ml::kMissingCategory) {
            return "FEATURE_ID (target-mean encoded)";
        }
        return "FEATURE_ID = " + describe_definition(set, to_int(level));
    }
    std::string out = akdfe && id == 8 ? "VALUE_CHAR" : event_feature_name(id);
    if (!level.empty()) {
        out += " = " + level;
        if (id == 2 && !akdfe && all_digits(level)) {
            if (const auto *c = dsl::Registry::builtin().find_concept(to_int(level))) {
                out += " (" + c->name + ")";
            }
        }
    } else if (digits < name.size()) {
        out += " (encoded)";
    }
    return out;
}

namespace {

std::string fmt(double v, int prec = 4) {
    if (!std::isfinite(v)) {
        return "n/a";
    }
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(prec);
    s << v;
    return s.str();
}

std::string fmt_p(double p) {
    if (p < 1e-5) {
        return "< 0.00001";
    }
    return fmt(p, 5);
}

std::string md_escape(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == '|') {
            out += "\\|";
        } else {
            out += c;
        }
    }
    return out;
}

std::vector<const ml::ResultRecord *> ranked(const ExperimentResult &r) {
    std::vector<const ml::ResultRecord *> v;
    for (const auto &rec : r.records) {
        if (!rec.failed) {
            v.push_back(&rec);
        }
    }
    std::stable_sort(v.begin(), v.end(),
                     [](const auto *a, const auto *b) { return a->metrics.auroc > b->metrics.auroc; });
    return v;
}

std::string hp_text(const ml::ResultRecord &r) { return ml::describe(r.config.model, r.hp); }

const akdfe::PcdMatrix *pcd_of(const FeatureSets &f, const std::string &experiment) {
    const auto &spec = find_experiment(experiment);
    if (spec.feature_set == FeatureSetId::Pcd1) {
        return &f.pcd1;
    }
    if (spec.feature_set == FeatureSetId::Pcd2) {
        return &f.pcd2;
    }
    return nullptr;
}

std::vector<std::optional<double>> target_column(const akdfe::PcdMatrix &m) {
    std::vector<std::optional<double>> y;
    for (auto v : m.y) {
        y.emplace_back(static_cast<double>(v));
    }
    return y;
}

} // namespace

void write_report(const std::vector<ExperimentResult> &results, const std::vector<HypothesisResult> &hyp,
                  const FeatureSets &f, const std::string &dir, const ReportFormats &formats) {
    const fs::path root{dir};
    fs::create_directories(root);
    std::ostringstream md;
    md << "# aKDFE evaluation report\n\n";
    md << "Risk levels of the second track come from a banded stand-in for the Janusmed aggregation.\n\n";

    md << "## Experiments\n\n| Experiment | Group | Rows | Columns | Records | Failed | Seconds |\n"
          "|---|---|---|---|---|---|---|\n";
    for (const auto &r : results) {
        const auto failed = std::count_if(r.records.begin(), r.records.end(), [](const auto &x) { return x.failed; });
        md << "| " << r.name << " | " << ml::to_string(r.group) << " | " << r.rows << " | " << r.columns << " | "
           << r.records.size() << " | " << failed << " | " << fmt(r.seconds, 1) << " |\n";
    }

    // top five models per experiment
    md << "\n## Top models by AUROC\n";
    std::ostringstream top_csv;
    top_csv << "experiment,rank,config,hyperparameters,k,auroc,accuracy,feature,description\n";
    for (const auto &r : results) {
        md << "\n### " << r.name << "\n\n| Rank | Configuration | Hyperparameters | k | AUROC | Accuracy | Selected features |\n"
           << "|---|---|---|---|---|---|---|\n";
        const auto v = ranked(r);
        for (std::size_t i = 0; i < std::min<std::size_t>(5, v.size()); ++i) {
            const auto &rec = *v[i];
            std::string feats;
            for (const auto &s : rec.selected) {
                const auto d = decode_column(s, f, r.name);
                feats += (feats.empty() ? "" : "<br>") + md_escape(s + ": " + d);
                csv::write_row(top_csv, {r.name, std::to_string(i + 1), rec.config.key(), hp_text(rec),
                                         std::to_string(rec.k), csv::format_double(rec.metrics.auroc),
                                         csv::format_double(rec.metrics.accuracy), s, d});
            }
            md << "| " << i + 1 << " | " << rec.config.key() << " | " << md_escape(hp_text(rec)) << " | " << rec.k
               << " | " << fmt(rec.metrics.auroc) << " | " << fmt(rec.metrics.accuracy) << " | " << feats << " |\n";
        }
    }

    md << "\n## Metrics\n\n| Experiment | Configuration | Accuracy | Precision | Recall | F1 | AUROC | Log loss | Brier |\n"
          "|---|---|---|---|---|---|---|---|---|\n";
    std::ostringstream metrics_csv;
    metrics_csv << "experiment,config,failed,error,accuracy,precision,recall,f1,auroc,log_loss,brier\n";
    for (const auto &r : results) {
        for (const auto &rec : r.records) {
            const auto &m = rec.metrics;
            csv::write_row(metrics_csv,
                           {r.name, rec.config.key(), rec.failed ? "1" : "0", rec.error,
                            csv::format_double(m.accuracy), csv::format_double(m.precision),
                            csv::format_double(m.recall), csv::format_double(m.f1), csv::format_double(m.auroc),
                            csv::format_double(m.log_loss), csv::format_double(m.brier)});
            if (rec.failed) {
                md << "| " << r.name << " | " << rec.config.key() << " | failed: " << md_escape(rec.error)
                   << " |||||||\n";
                continue;
            }
            md << "| " << r.name << " | " << rec.config.key() << " | " << fmt(m.accuracy) << " | "
               << fmt(m.precision) << " | " << fmt(m.recall) << " | " << fmt(m.f1) << " | " << fmt(m.auroc)
               << " | " << fmt(m.log_loss) << " | " << fmt(m.brier) << " |\n";
        }
    }

    if (!hyp.empty()) {
        md << "\n## Sub-hypotheses (one-way ANOVA on AUROC, alpha 0.05)\n\n"
              "| Sub-hypothesis | Group A | Group B | n A | n B | Excluded | F-score | p-value | Decision |\n"
              "|---|---|---|---|---|---|---|---|---|\n";
        for (const auto &h : hyp) {
            md << "| " << h.id << " | " << h.group_a << " | " << h.group_b << " | " << h.a.size() << " | "
               << h.b.size() << " | " << h.excluded_a + h.excluded_b << " | " << fmt(h.anova.f, 5) << " | "
               << fmt_p(h.anova.p) << " | " << (h.reject ? "reject" : "fail to reject") << " |\n";
        }
    }

    // FC versus S among selected PCD features
    std::ostringstream ratio_csv;
    ratio_csv << "experiment,fc_count,s_count,total,fc_ratio,s_ratio\n";
    std::ostringstream ratio_md;
    for (const auto &r : results) {
        if (r.group != ml::Group::Pcd) {
            continue;
        }
        std::size_t fc = 0, s = 0;
        for (const auto &rec : r.records) {
            if (rec.failed) {
                continue;
            }
            for (const auto &name : rec.selected) {
                (name.rfind("FC", 0) == 0 ? fc : s) += 1;
            }
        }
        const auto total = fc + s;
        const double fr = total ? static_cast<double>(fc) / static_cast<double>(total) : 0.0;
        const double sr = total ? static_cast<double>(s) / static_cast<double>(total) : 0.0;
        ratio_csv << r.name << ',' << fc << ',' << s << ',' << total << ',' << csv::format_double(fr) << ','
                  << csv::format_double(sr) << '\n';
        ratio_md << "| " << r.name << " | " << fc << " | " << s << " | " << total << " | " << fmt(fr, 3) << " | "
                 << fmt(sr, 3) << " |\n";
    }
    if (!ratio_md.str().empty()) {
        md << "\n## Selection ratio of patient-centric methods\n\n"
              "| Experiment | FC selected | S selected | Total | FC ratio | S ratio |\n|---|---|---|---|---|---|\n"
           << ratio_md.str();
    }

    // correlations for the best PCD model's features
    nlohmann::json corr_json = nlohmann::json::object();
    for (const auto &r : results) {
        const auto *pcd = pcd_of(f, r.name);
        const auto v = ranked(r);
        if (!pcd || v.empty()) {
            continue;
        }
        std::vector<std::string> labels;
        std::vector<std::vector<std::optional<double>>> cols;
        for (const auto &name : v.front()->selected) {
            if (const auto *c = pcd->column(name)) {
                labels.push_back(name);
                cols.push_back(c->values);
            }
        }
        labels.push_back("Y");
        cols.push_back(target_column(*pcd));
        const auto cm = stats::correlation_matrix(labels, cols);
        corr_json[r.name] = cm.to_json();
        if (formats.csv) {
            std::ofstream out{root / ("correlation_" + r.name + ".csv")};
            out << cm.to_csv();
        }

        std::vector<std::string> all_labels;
        std::vector<std::vector<std::optional<double>>> all_cols;
        for (const auto &c : pcd->columns) {
            all_labels.push_back(c.name);
            all_cols.push_back(c.values);
        }
        all_labels.push_back("Y");
        all_cols.push_back(target_column(*pcd));
        const auto top = stats::top_target_correlations(stats::correlation_matrix(all_labels, all_cols), 10);
        md << "\n## Target correlations, " << r.name << "\n\nTop model features:\n\n| Feature | r with Y |\n|---|---|\n";
        for (std::size_t i = 0; i + 1 < cm.labels.size(); ++i) {
            md << "| " << md_escape(cm.labels[i] + ": " + decode_column(cm.labels[i], f, r.name)) << " | "
               << fmt(cm.at(i, cm.labels.size() - 1), 3) << " |\n";
        }
        md << "\nStrongest columns overall:\n\n| Feature | r with Y |\n|---|---|\n";
        for (const auto &t : top) {
            md << "| " << md_escape(t.label + ": " + decode_column(t.label, f, r.name)) << " | " << fmt(t.r, 3)
               << " |\n";
        }
    }

    if (formats.markdown) {
        std::ofstream out{root / "report.md"};
        out << md.str();
    }
    if (formats.csv) {
        std::ofstream{root / "top_models.csv"} << top_csv.str();
        std::ofstream{root / "metrics.csv"} << metrics_csv.str();
        std::ofstream{root / "selection_ratio.csv"} << ratio_csv.str();
        if (!hyp.empty()) {
            std::ofstream h{root / "hypotheses.csv"};
            write_hypotheses_csv(h, hyp);
        }
    }
    std::ofstream{root / "correlations.json"} << corr_json.dump(1) << '\n';
}

} // namespace kdfe::harness
