#include "kdfe/ml/matrix.hpp"

#include "kdfe/error.hpp"

namespace kdfe::ml {

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
    Matrix out(rows, idx.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out(r, j) = (*this)(r, idx[j]);
        }
    }
    return out;
}

RawMatrix RawMatrix::subset(std::span<const std::size_t> idx) const {
    RawMatrix out;
    out.columns.reserve(columns.size());
    for (const auto &c : columns) {
        RawColumn s{c.name, c.categorical, {}, {}};
        if (c.categorical) {
            s.categories.reserve(idx.size());
            for (auto i : idx) {
                s.categories.push_back(c.categories[i]);
            }
        } else {
            s.numeric.reserve(idx.size());
            for (auto i : idx) {
                s.numeric.push_back(c.numeric[i]);
            }
        }
        out.columns.push_back(std::move(s));
    }
    for (auto i : idx) {
        out.y.push_back(y[i]);
        if (!groups.empty()) {
            out.groups.push_back(groups[i]);
        }
    }
    return out;
}

void RawMatrix::validate() const {
    for (const auto &c : columns) {
        const auto n = c.categorical ? c.categories.size() : c.numeric.size();
        if (n != rows()) {
            throw ValidationError("column " + c.name + " has " + std::to_string(n) + " cells, expected " +
                                  std::to_string(rows()));
        }
    }
    if (!groups.empty() && groups.size() != rows()) {
        throw ValidationError("group key count does not match the row count");
    }
    for (auto v : y) {
        if (v > 1) {
            throw ValidationError("labels must be 0 or 1");
        }
    }
}

} // namespace kdfe::ml
