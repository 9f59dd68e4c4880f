#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace statflow {

/// Sparse matrix assembled in coordinate form with duplicate accumulation,
/// compressed to CSR by a stable sorted merge. The merge makes the compressed
/// values independent of assembly order up to floating-point summation order
/// of exact duplicates.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(int rows, int cols);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int nnz() const { return static_cast<int>(values_.size()); }
    bool compressed() const { return compressed_; }

    /// COO accumulation; call compress() before any product or query.
    void add(int row, int col, double value);
    /// Appends factor * other to the COO buffer (shapes must match).
    void add_scaled(const SparseMatrix& other, double factor);
    void compress();

    void apply(std::span<const double> x, std::span<double> y) const;       // y = A x
    std::vector<double> apply(std::span<const double> x) const;
    void apply_transpose(std::span<const double> x, std::span<double> y) const;
    std::vector<double> apply_transpose(std::span<const double> x) const;

    SparseMatrix transposed() const;
    /// Submatrix with the given row/column index lists (order preserved).
    SparseMatrix select(std::span<const int> row_ids, std::span<const int> col_ids) const;
    /// C = a*A + b*B, shapes must match.
    static SparseMatrix combine(double a, const SparseMatrix& A, double b, const SparseMatrix& B);

    double max_abs() const;
    double entry(int row, int col) const; ///< 0 if not stored

    template <class F>
    void for_each(F&& f) const {
        for (int r = 0; r < rows_; ++r)
            for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                f(r, col_idx_[k], values_[k]);
    }

    /// MatrixMarket coordinate format (1-based indices).
    void write_matrix_market(std::ostream& out) const;

    const std::vector<int>& row_ptr() const { return row_ptr_; }
    const std::vector<int>& col_idx() const { return col_idx_; }
    const std::vector<double>& values() const { return values_; }

private:
    void require_compressed(const char* op) const;

    int rows_ = 0;
    int cols_ = 0;
    bool compressed_ = false;
    std::vector<int> coo_rows_, coo_cols_;
    std::vector<double> coo_values_;
    std::vector<int> row_ptr_, col_idx_;
    std::vector<double> values_;
};

/// Sparse LU factorization (direct solve). Throws on singular input.
class SparseFactorization {
public:
    explicit SparseFactorization(const SparseMatrix& matrix);
    ~SparseFactorization();
    SparseFactorization(SparseFactorization&&) noexcept;
    SparseFactorization& operator=(SparseFactorization&&) noexcept;

    void solve(std::span<const double> rhs, std::span<double> x) const;
    std::vector<double> solve(std::span<const double> rhs) const;
    int size() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Small dense-vector helpers shared by the solvers.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y); // y += alpha x
void scale(double alpha, std::span<double> x);

} // namespace statflow
