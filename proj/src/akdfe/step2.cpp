#include "kdfe/akdfe/step2.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

namespace kdfe::akdfe {

namespace {

// Rows grouped per patient in (date, feature id) order.
std::vector<std::vector<const FeatureRow *>> group_rows(const EventAkdfeFeatureSet &fs,
                                                        std::span<const std::string> patients) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < patients.size(); ++i) {
        if (!index.emplace(patients[i], i).second) {
            throw ValidationError("patient " + patients[i] + " listed twice");
        }
    }
    std::vector<std::vector<const FeatureRow *>> groups(patients.size());
    for (const auto &r : fs.rows) {
        auto it = index.find(r.patient_id);
        if (it == index.end()) {
            throw ValidationError("feature rows for patient " + r.patient_id +
                                  " who is not in the patient list");
        }
        groups[it->second].push_back(&r);
    }
    for (auto &g : groups) {
        std::stable_sort(g.begin(), g.end(),
                         [](const FeatureRow *a, const FeatureRow *b) { return feature_row_less(*a, *b); });
    }
    return groups;
}

std::string fc_name(const std::vector<int> &ids) {
    std::string name = "FC";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) {
            name += '_';
        }
        name += std::to_string(ids[i]);
    }
    return name;
}

} // namespace

int patient_same_event_max(const EventAkdfeFeatureSet &fs) {
    std::map<std::pair<std::string_view, Date>, int> counts;
    int best = 0;
    for (const auto &r : fs.rows) {
        best = std::max(best, ++counts[{r.patient_id, r.observation_start_date}]);
    }
    return best;
}

NGramResult generate_ngrams(const EventAkdfeFeatureSet &fs, std::span<const std::string> patients,
                            const NGramConfig &cfg) {
    if (cfg.n < 1) {
        throw ValidationError("n-gram length must be at least 1");
    }
    const auto groups = group_rows(fs, patients);
    const auto n = static_cast<std::size_t>(cfg.n);
    std::map<std::vector<int>, std::vector<double>> tokens;
    std::vector<double> totals(patients.size(), 0.0);
    for (std::size_t p = 0; p < groups.size(); ++p) {
        const auto &g = groups[p];
        if (g.size() < n) {
            continue;
        }
        for (std::size_t i = 0; i + n <= g.size(); ++i) {
            std::vector<int> key(n);
            for (std::size_t j = 0; j < n; ++j) {
                key[j] = g[i + j]->feature_id;
            }
            auto &col = tokens[key];
            if (col.empty()) {
                col.assign(patients.size(), 0.0);
            }
            col[p] += 1;
            totals[p] += 1;
        }
    }
    NGramResult out;
    out.block.patients.assign(patients.begin(), patients.end());
    for (auto &[ids, counts] : tokens) {
        PcdColumn c{fc_name(ids), ColumnKind::Count, ids, {}};
        c.values.assign(counts.begin(), counts.end());
        out.block.columns.push_back(std::move(c));
    }
    PcdColumn total{"FC_TOTAL", ColumnKind::CountTotal, {}, {}};
    total.values.assign(totals.begin(), totals.end());
    out.block.columns.push_back(std::move(total));
    out.patient_same_event_max = patient_same_event_max(fs);
    return out;
}

ColumnBlock sum_feature_values(const EventAkdfeFeatureSet &fs, std::span<const std::string> patients) {
    const auto groups = group_rows(fs, patients);
    std::map<int, std::vector<std::optional<double>>> sums;
    for (std::size_t p = 0; p < groups.size(); ++p) {
        for (const auto *r : groups[p]) {
            auto &col = sums[r->feature_id];
            if (col.empty()) {
                col.resize(patients.size());
            }
            auto &cell = col[p];
            cell = cell.value_or(0.0) + r->value_decimal.value_or(0.0);
        }
    }
    ColumnBlock out;
    out.patients.assign(patients.begin(), patients.end());
    for (auto &[id, values] : sums) {
        out.columns.push_back({"S" + std::to_string(id), ColumnKind::Sum, {id}, std::move(values)});
    }
    return out;
}

const FeatureDefinition *PcdMatrix::definition(int feature_id) const noexcept {
    for (const auto &d : catalog) {
        if (d.feature_id == feature_id) {
            return &d;
        }
    }
    return nullptr;
}

const PcdColumn *PcdMatrix::column(std::string_view name) const noexcept {
    for (const auto &c : columns) {
        if (c.name == name) {
            return &c;
        }
    }
    return nullptr;
}

namespace {

std::string symmetric_difference(const std::set<std::string> &a, const std::set<std::string> &b,
                                 std::string_view a_name, std::string_view b_name) {
    std::string msg;
    auto list = [&](const std::set<std::string> &x, const std::set<std::string> &y, std::string_view name) {
        std::vector<std::string> only;
        std::set_difference(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(only));
        if (only.empty()) {
            return;
        }
        msg += " only in " + std::string{name} + ":";
        for (const auto &p : only) {
            msg += " " + p;
        }
        msg += ';';
    };
    list(a, b, a_name);
    list(b, a, b_name);
    return msg;
}

std::set<std::string> unique_set(const std::vector<std::string> &ids, std::string_view what) {
    std::set<std::string> s;
    for (const auto &id : ids) {
        if (!s.insert(id).second) {
            throw ValidationError("duplicate patient " + id + " in " + std::string{what});
        }
    }
    return s;
}

// Reorders a block's cells to follow `order`.
void align(ColumnBlock &b, const std::vector<std::string> &order) {
    if (b.patients == order) {
        return;
    }
    std::unordered_map<std::string_view, std::size_t> pos;
    for (std::size_t i = 0; i < b.patients.size(); ++i) {
        pos.emplace(b.patients[i], i);
    }
    for (auto &c : b.columns) {
        std::vector<std::optional<double>> v(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            v[i] = c.values[pos.at(order[i])];
        }
        c.values = std::move(v);
    }
    b.patients = order;
}

} // namespace

PcdMatrix assemble_pcd(ColumnBlock fc, ColumnBlock s, std::span<const OutcomeLabel> outcomes,
                       std::vector<FeatureDefinition> catalog) {
    std::vector<std::string> order;
    for (const auto &o : outcomes) {
        order.push_back(o.patient_id);
    }
    const auto out_set = unique_set(order, "outcomes");
    const auto fc_set = unique_set(fc.patients, "count columns");
    const auto s_set = unique_set(s.patients, "sum columns");
    std::string diff = symmetric_difference(fc_set, out_set, "counts", "outcomes") +
                       symmetric_difference(s_set, out_set, "sums", "outcomes");
    if (!diff.empty()) {
        throw ValidationError("patient sets differ:" + diff);
    }
    align(fc, order);
    align(s, order);
    PcdMatrix m;
    m.patients = std::move(order);
    for (auto *block : {&fc, &s}) {
        for (auto &c : block->columns) {
            if (c.values.size() != m.patients.size()) {
                throw ValidationError("column " + c.name + " has the wrong length");
            }
            m.columns.push_back(std::move(c));
        }
    }
    for (const auto &o : outcomes) {
        m.y.push_back(static_cast<std::uint8_t>(o.y));
    }
    m.catalog = std::move(catalog);
    return m;
}

PcdMatrix build_pcd(const EventAkdfeFeatureSet &fs, std::span<const OutcomeLabel> outcomes,
                    const NGramConfig &cfg) {
    std::vector<std::string> patients;
    for (const auto &o : outcomes) {
        patients.push_back(o.patient_id);
    }
    auto fc = generate_ngrams(fs, patients, cfg);
    auto s = sum_feature_values(fs, patients);
    return assemble_pcd(std::move(fc.block), std::move(s), outcomes, fs.catalog);
}

std::string_view to_string(ColumnKind k) noexcept {
    switch (k) {
    case ColumnKind::Count: return "count";
    case ColumnKind::CountTotal: return "count_total";
    case ColumnKind::Sum: return "sum";
    }
    return "count";
}

nlohmann::json pcd_catalog_to_json(const PcdMatrix &m) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto &c : m.columns) {
        nlohmann::json codes = nlohmann::json::array();
        for (int id : c.feature_ids) {
            const auto *d = m.definition(id);
            codes.push_back(d ? nlohmann::json(dsl::render_feature_code(d->expr)) : nlohmann::json());
        }
        cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}, {"feature_ids", c.feature_ids},
                        {"codes", std::move(codes)}});
    }
    EventAkdfeFeatureSet tmp;
    tmp.catalog = m.catalog;
    return {{"columns", std::move(cols)}, {"features", catalog_to_json(tmp).at("features")}};
}

void save_pcd(const std::string &stem, const PcdMatrix &m) {
    std::ofstream out{stem + ".csv", std::ios::binary};
    if (!out) {
        throw Error("cannot write '" + stem + ".csv'");
    }
    csv::Row header{"PATIENT_ID"};
    for (const auto &c : m.columns) {
        header.push_back(c.name);
    }
    header.push_back("Y");
    csv::write_row(out, header);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        csv::Row row{m.patients[r]};
        for (const auto &c : m.columns) {
            row.push_back(csv::format_optional(c.values[r]));
        }
        row.push_back(std::to_string(m.y[r]));
        csv::write_row(out, row);
    }
    std::ofstream cat{stem + ".catalog.json"};
    cat << pcd_catalog_to_json(m).dump(1) << '\n';
}

PcdMatrix load_pcd(const std::string &stem) {
    std::ifstream in{stem + ".catalog.json"};
    if (!in) {
        throw ValidationError("cannot open '" + stem + ".catalog.json'");
    }
    PcdMatrix m;
    nlohmann::json j;
    try {
        in >> j;
        EventAkdfeFeatureSet tmp;
        catalog_from_json({{"track", "WITHOUT_JANUSMED"}, {"features", j.at("features")}}, tmp);
        m.catalog = std::move(tmp.catalog);
        for (const auto &c : j.at("columns")) {
            PcdColumn col;
            col.name = c.at("name").get<std::string>();
            const auto kind = c.at("kind").get<std::string>();
            col.kind = kind == "sum" ? ColumnKind::Sum
                       : kind == "count_total" ? ColumnKind::CountTotal
                                               : ColumnKind::Count;
            col.feature_ids = c.at("feature_ids").get<std::vector<int>>();
            m.columns.push_back(std::move(col));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(stem + ".catalog.json: " + e.what());
    }
    auto t = csv::read_file(stem + ".csv");
    if (t.header.size() != m.columns.size() + 2 || t.header.front() != "PATIENT_ID" ||
        t.header.back() != "Y") {
        throw SchemaError(stem + ".csv: header does not match the catalog");
    }
    for (std::size_t i = 0; i < m.columns.size(); ++i) {
        if (t.header[i + 1] != m.columns[i].name) {
            throw SchemaError(stem + ".csv: column " + t.header[i + 1] + " does not match the catalog");
        }
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto &row = t.rows[r];
        if (row.size() != t.header.size()) {
            throw RowError(t.lines[r], "wrong field count");
        }
        try {
            m.patients.push_back(row.front());
            for (std::size_t i = 0; i < m.columns.size(); ++i) {
                const auto &cell = row[i + 1];
                m.columns[i].values.push_back(cell.empty() ? std::nullopt
                                                           : std::optional{csv::parse_double(cell)});
            }
            const auto y = csv::parse_int(row.back());
            if (y != 0 && y != 1) {
                throw ValueError("Y must be 0 or 1");
            }
            m.y.push_back(static_cast<std::uint8_t>(y));
        } catch (const ValueError &e) {
            throw RowError(t.lines[r], e.what());
        }
    }
    return m;
}

} // namespace kdfe::akdfe
