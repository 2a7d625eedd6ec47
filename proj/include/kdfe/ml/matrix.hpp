#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kdfe::ml {

/// Dense row-major matrix. NaN marks an absent cell before imputation.
struct Matrix {
    std::size_t rows{0};
    std::size_t cols{0};
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows{r}, cols{c}, data(r * c, fill) {}

    double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

    Matrix select_rows(std::span<const std::size_t> idx) const;
    Matrix select_cols(std::span<const std::size_t> idx) const;
    bool operator==(const Matrix &) const = default;
};

/// A column before encoding. Categorical cells use "" for a missing value;
/// numeric cells use NaN.
struct RawColumn {
    std::string name;
    bool categorical{false};
    std::vector<double> numeric;
    std::vector<std::string> categories;
};

struct RawMatrix {
    std::vector<RawColumn> columns;
    std::vector<std::uint8_t> y;
    /// Grouping key per row (patient id); rows of one group never straddle
    /// a split.
    std::vector<std::string> groups;

    std::size_t rows() const noexcept { return y.size(); }
    RawMatrix subset(std::span<const std::size_t> idx) const;
    /// Throws ValidationError on ragged columns or non-binary labels.
    void validate() const;
};

} // namespace kdfe::ml
