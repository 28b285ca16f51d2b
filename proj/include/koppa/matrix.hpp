#ifndef KOPPA_MATRIX_HPP
#define KOPPA_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace koppa {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. The numerical substrate for the whole
// library: keys, prompts, bases and weights are all stored this way.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vector data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vector>& rows);
    static Matrix diag(const Vector& d);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    Vector col(std::size_t c) const;
    void set_col(std::size_t c, std::span<const double> v);
    Vector row_vec(std::size_t r) const { return Vector(row(r).begin(), row(r).end()); }
    void set_row(std::size_t r, std::span<const double> v);

    Matrix transpose() const;
    double frobenius_norm() const;
    bool all_finite() const;

    // Columns of `other` appended on the right; row counts must agree.
    Matrix hcat(const Matrix& other) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);
// y = A^T x
Vector matvec_t(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> v);
bool all_finite(std::span<const double> v);

} // namespace koppa

#endif
