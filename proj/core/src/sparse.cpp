#include "statflow/sparse.hpp"

#include "statflow/field_io.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace statflow {

SparseMatrix::SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("SparseMatrix: negative shape");
    row_ptr_.assign(rows_ + 1, 0);
    compressed_ = true; // empty matrix is trivially compressed
}

void SparseMatrix::add(int row, int col, double value) {
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
        throw std::out_of_range("SparseMatrix::add: index out of range");
    coo_rows_.push_back(row);
    coo_cols_.push_back(col);
    coo_values_.push_back(value);
    compressed_ = false;
}

void SparseMatrix::add_scaled(const SparseMatrix& other, double factor) {
    if (other.rows() != rows_ || other.cols() != cols_)
        throw std::invalid_argument("SparseMatrix::add_scaled: shape mismatch");
    other.require_compressed("add_scaled");
    coo_rows_.reserve(coo_rows_.size() + other.nnz());
    coo_cols_.reserve(coo_cols_.size() + other.nnz());
    coo_values_.reserve(coo_values_.size() + other.nnz());
    other.for_each([this, factor](int r, int c, double v) {
        coo_rows_.push_back(r);
        coo_cols_.push_back(c);
        coo_values_.push_back(factor * v);
    });
    compressed_ = false;
}

void SparseMatrix::compress() {
    if (compressed_) return;
    const std::size_t n = coo_values_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
        if (coo_rows_[a] != coo_rows_[b]) return coo_rows_[a] < coo_rows_[b];
        return coo_cols_[a] < coo_cols_[b];
    });

    // Merge previously compressed entries with the new COO batch.
    std::vector<int> old_rows(values_.size()), old_cols(values_.size());
    std::vector<double> old_vals(values_.size());
    {
        std::size_t k = 0;
        for (int r = 0; r < rows_; ++r)
            for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p, ++k) {
                old_rows[k] = r;
                old_cols[k] = col_idx_[p];
                old_vals[k] = values_[p];
            }
    }

    row_ptr_.assign(rows_ + 1, 0);
    col_idx_.clear();
    values_.clear();
    std::size_t i = 0, j = 0;
    int last_r = -1, last_c = -1;
    auto push = [&, this](int r, int c, double v) {
        if (r == last_r && c == last_c) {
            values_.back() += v;
            return;
        }
        col_idx_.push_back(c);
        values_.push_back(v);
        ++row_ptr_[r + 1];
        last_r = r;
        last_c = c;
    };
    while (i < old_rows.size() || j < n) {
        bool take_old;
        if (i >= old_rows.size()) take_old = false;
        else if (j >= n) take_old = true;
        else {
            const int ro = old_rows[i], co = old_cols[i];
            const int rn = coo_rows_[order[j]], cn = coo_cols_[order[j]];
            take_old = (ro < rn) || (ro == rn && co <= cn);
        }
        if (take_old) {
            push(old_rows[i], old_cols[i], old_vals[i]);
            ++i;
        } else {
            push(coo_rows_[order[j]], coo_cols_[order[j]], coo_values_[order[j]]);
            ++j;
        }
    }
    for (int r = 0; r < rows_; ++r) row_ptr_[r + 1] += row_ptr_[r];
    coo_rows_.clear();
    coo_cols_.clear();
    coo_values_.clear();
    coo_rows_.shrink_to_fit();
    coo_cols_.shrink_to_fit();
    coo_values_.shrink_to_fit();
    compressed_ = true;
}

void SparseMatrix::require_compressed(const char* op) const {
    if (!compressed_)
        throw std::logic_error(std::string("SparseMatrix::") + op + ": call compress() first");
}

void SparseMatrix::apply(std::span<const double> x, std::span<double> y) const {
    require_compressed("apply");
    if (static_cast<int>(x.size()) != cols_ || static_cast<int>(y.size()) != rows_)
        throw std::invalid_argument("SparseMatrix::apply: size mismatch");
    for (int r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            acc += values_[k] * x[col_idx_[k]];
        y[r] = acc;
    }
}

std::vector<double> SparseMatrix::apply(std::span<const double> x) const {
    std::vector<double> y(rows_);
    apply(x, y);
    return y;
}

void SparseMatrix::apply_transpose(std::span<const double> x, std::span<double> y) const {
    require_compressed("apply_transpose");
    if (static_cast<int>(x.size()) != rows_ || static_cast<int>(y.size()) != cols_)
        throw std::invalid_argument("SparseMatrix::apply_transpose: size mismatch");
    std::fill(y.begin(), y.end(), 0.0);
    for (int r = 0; r < rows_; ++r)
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            y[col_idx_[k]] += values_[k] * x[r];
}

std::vector<double> SparseMatrix::apply_transpose(std::span<const double> x) const {
    std::vector<double> y(cols_);
    apply_transpose(x, y);
    return y;
}

SparseMatrix SparseMatrix::transposed() const {
    require_compressed("transposed");
    SparseMatrix t(cols_, rows_);
    for_each([&t](int r, int c, double v) { t.add(c, r, v); });
    t.compress();
    return t;
}

SparseMatrix SparseMatrix::select(std::span<const int> row_ids, std::span<const int> col_ids) const {
    require_compressed("select");
    std::vector<int> col_map(cols_, -1);
    for (std::size_t j = 0; j < col_ids.size(); ++j) {
        if (col_ids[j] < 0 || col_ids[j] >= cols_)
            throw std::out_of_range("SparseMatrix::select: column id out of range");
        col_map[col_ids[j]] = static_cast<int>(j);
    }
    SparseMatrix out(static_cast<int>(row_ids.size()), static_cast<int>(col_ids.size()));
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        const int r = row_ids[i];
        if (r < 0 || r >= rows_)
            throw std::out_of_range("SparseMatrix::select: row id out of range");
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const int c = col_map[col_idx_[k]];
            if (c >= 0) out.add(static_cast<int>(i), c, values_[k]);
        }
    }
    out.compress();
    return out;
}

SparseMatrix SparseMatrix::combine(double a, const SparseMatrix& A, double b, const SparseMatrix& B) {
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw std::invalid_argument("SparseMatrix::combine: shape mismatch");
    A.require_compressed("combine");
    B.require_compressed("combine");
    SparseMatrix out(A.rows(), A.cols());
    A.for_each([&](int r, int c, double v) { out.add(r, c, a * v); });
    B.for_each([&](int r, int c, double v) { out.add(r, c, b * v); });
    out.compress();
    return out;
}

double SparseMatrix::max_abs() const {
    require_compressed("max_abs");
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

double SparseMatrix::entry(int row, int col) const {
    require_compressed("entry");
    for (int k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k)
        if (col_idx_[k] == col) return values_[k];
    return 0.0;
}

void SparseMatrix::write_matrix_market(std::ostream& out) const {
    require_compressed("write_matrix_market");
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << rows_ << ' ' << cols_ << ' ' << nnz() << '\n';
    for_each([&out](int r, int c, double v) {
        out << (r + 1) << ' ' << (c + 1) << ' ' << format_double(v) << '\n';
    });
}

struct SparseFactorization::Impl {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    int n = 0;
};

SparseFactorization::SparseFactorization(const SparseMatrix& matrix)
    : impl_(std::make_unique<Impl>()) {
    if (matrix.rows() != matrix.cols())
        throw std::invalid_argument("SparseFactorization: matrix must be square");
    if (!matrix.compressed())
        throw std::logic_error("SparseFactorization: compress() the matrix first");
    impl_->n = matrix.rows();
    Eigen::SparseMatrix<double> em(matrix.rows(), matrix.cols());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(matrix.nnz());
    matrix.for_each([&triplets](int r, int c, double v) { triplets.emplace_back(r, c, v); });
    em.setFromTriplets(triplets.begin(), triplets.end());
    em.makeCompressed();
    impl_->lu.analyzePattern(em);
    impl_->lu.factorize(em);
    if (impl_->lu.info() != Eigen::Success)
        throw std::runtime_error("SparseFactorization: factorization failed (singular matrix?)");
}

SparseFactorization::~SparseFactorization() = default;
SparseFactorization::SparseFactorization(SparseFactorization&&) noexcept = default;
SparseFactorization& SparseFactorization::operator=(SparseFactorization&&) noexcept = default;

void SparseFactorization::solve(std::span<const double> rhs, std::span<double> x) const {
    if (static_cast<int>(rhs.size()) != impl_->n || static_cast<int>(x.size()) != impl_->n)
        throw std::invalid_argument("SparseFactorization::solve: size mismatch");
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), impl_->n);
    Eigen::Map<Eigen::VectorXd> out(x.data(), impl_->n);
    out = impl_->lu.solve(b);
}

std::vector<double> SparseFactorization::solve(std::span<const double> rhs) const {
    std::vector<double> x(rhs.size());
    solve(rhs, x);
    return x;
}

int SparseFactorization::size() const { return impl_->n; }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
    for (double& v : x) v *= alpha;
}

} // namespace statflow
