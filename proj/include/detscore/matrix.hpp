#pragma once

#include <cstddef>
#include <vector>

#include "detscore/errors.hpp"

namespace detscore {

/// Dense row-major matrix of doubles. Deliberately minimal: the library only
/// needs element access, row views and column extraction.
struct matrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;

    matrix() = default;
    matrix(std::size_t rows, std::size_t cols, double init = 0.0)
        : n_rows(rows), n_cols(cols), values(rows * cols, init) {}

    double& operator()(std::size_t i, std::size_t j) { return values[i * n_cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * n_cols + j]; }

    const double* row(std::size_t i) const { return values.data() + i * n_cols; }
    double* row(std::size_t i) { return values.data() + i * n_cols; }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) out[i] = (*this)(i, j);
        return out;
    }
};

} // namespace detscore
