// operators.hpp - dense complex operators: spectral decomposition, Born rule,
// density matrices, projections and projective instruments.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Project-wide tolerances. These are part of the verification contract and
// are referenced by tests; do not tune them per call site.
inline constexpr double kTolHermitian = 1e-10;
inline constexpr double kTolIdempotent = 1e-10;
inline constexpr double kTolOrthogonal = 1e-10;
inline constexpr double kTolPartition = 1e-10;
inline constexpr double kTolTrace = 1e-10;
inline constexpr double kTolPsd = 1e-9;
inline constexpr double kTolDegeneracy = 1e-8;
inline constexpr double kTolNullWeight = 1e-12;

// ---------------------------------------------------------------- basics

inline double max_abs(const Matrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const Matrix& a, double tol = kTolHermitian) {
    return a.rows() == a.cols() && max_abs(a - a.adjoint()) <= tol;
}

// Max-norm of the commutator [a, b].
inline double commutator_norm(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw DimensionMismatch("commutator_norm: operands must be square and equal-sized");
    return max_abs(a * b - b * a);
}

inline bool commutes(const Matrix& a, const Matrix& b, double tol = kTolHermitian) {
    return commutator_norm(a, b) <= tol;
}

inline double operator_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

// ------------------------------------------------------------ projections

// Orthogonal projection, validated on construction.
class Projection {
public:
    explicit Projection(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols())
            throw DimensionMismatch("Projection: matrix must be square");
        if (!is_hermitian(m_))
            throw NonHermitian("Projection: matrix is not Hermitian");
        if (max_abs(m_ * m_ - m_) > kTolIdempotent)
            throw Error("Projection: matrix is not idempotent");
    }

    const Matrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }
    int rank() const { return static_cast<int>(std::lround(m_.trace().real())); }

private:
    Matrix m_;
};

// --------------------------------------------------------- density matrix

class DensityMatrix {
public:
    explicit DensityMatrix(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols())
            throw DimensionMismatch("DensityMatrix: matrix must be square");
        if (!is_hermitian(m_))
            throw NonHermitian("DensityMatrix: matrix is not Hermitian");
        if (std::abs(m_.trace().real() - 1.0) > kTolTrace || std::abs(m_.trace().imag()) > kTolTrace)
            throw Error("DensityMatrix: trace must be 1");
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kTolPsd)
            throw Error("DensityMatrix: matrix is not positive semidefinite");
    }

    const Matrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

private:
    Matrix m_;
};

// Pure state from a (not necessarily normalized) vector.
inline DensityMatrix pure_state(const Vector& psi) {
    double n2 = psi.squaredNorm();
    if (n2 <= 0.0) throw Error("pure_state: zero vector");
    return DensityMatrix(Matrix(psi * psi.adjoint() / n2));
}

// tr(rho P), clamped to [0, 1].
inline double born_probability(const DensityMatrix& state, const Projection& p) {
    if (state.dim() != p.dim())
        throw DimensionMismatch("born_probability: state and projection dimensions differ");
    double v = (state.matrix() * p.matrix()).trace().real();
    return std::clamp(v, 0.0, 1.0);
}

// ------------------------------------------------------------- instrument

// Ordered outcome alphabet shared by all steps of a schedule.
class Alphabet {
public:
    Alphabet() = default;
    explicit Alphabet(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
        if (symbols_.empty()) throw Error("Alphabet: must not be empty");
        for (std::size_t i = 0; i < symbols_.size(); ++i)
            for (std::size_t j = i + 1; j < symbols_.size(); ++j)
                if (symbols_[i] == symbols_[j])
                    throw Error("Alphabet: duplicate symbol '" + symbols_[i] + "'");
    }

    int size() const { return static_cast<int>(symbols_.size()); }
    const std::string& symbol(int i) const { return symbols_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& symbols() const { return symbols_; }

    int index_of(const std::string& s) const {
        for (std::size_t i = 0; i < symbols_.size(); ++i)
            if (symbols_[i] == s) return static_cast<int>(i);
        throw UnknownSymbol("Alphabet: unknown symbol '" + s + "'");
    }

    bool operator==(const Alphabet& o) const { return symbols_ == o.symbols_; }

private:
    std::vector<std::string> symbols_;
};

// Projective instrument: one projection per alphabet symbol, mutually
// orthogonal, summing to the identity.
class Instrument {
public:
    Instrument(Alphabet alphabet, std::vector<Matrix> projections)
        : alphabet_(std::move(alphabet)) {
        if (static_cast<int>(projections.size()) != alphabet_.size())
            throw DimensionMismatch("Instrument: one projection per symbol required");
        const Eigen::Index d = projections.front().rows();
        Matrix sum = Matrix::Zero(d, d);
        for (auto& p : projections) {
            if (p.rows() != d || p.cols() != d)
                throw DimensionMismatch("Instrument: projections must share one dimension");
            projections_.emplace_back(std::move(p));
            sum += projections_.back().matrix();
        }
        for (std::size_t i = 0; i < projections_.size(); ++i)
            for (std::size_t j = i + 1; j < projections_.size(); ++j)
                if (max_abs(projections_[i].matrix() * projections_[j].matrix()) > kTolOrthogonal)
                    throw Error("Instrument: projections are not mutually orthogonal");
        if (max_abs(sum - Matrix::Identity(d, d)) > kTolPartition)
            throw Error("Instrument: projections do not sum to the identity");
    }

    const Alphabet& alphabet() const { return alphabet_; }
    int size() const { return alphabet_.size(); }
    Eigen::Index dim() const { return projections_.front().dim(); }
    const Projection& projection(int symbol_index) const {
        return projections_.at(static_cast<std::size_t>(symbol_index));
    }

private:
    Alphabet alphabet_;
    std::vector<Projection> projections_;
};

// ---------------------------------------------------- spectral decomposition

// Eigenvalue/eigenprojection pairs of a Hermitian matrix, eigenvalues
// ascending, eigenvalues closer than tol_degen merged into one projection.
inline std::vector<std::pair<double, Projection>> spectral_decompose(
    const Matrix& h, double tol_degen = kTolDegeneracy) {
    if (h.rows() != h.cols())
        throw DimensionMismatch("spectral_decompose: matrix must be square");
    if (!is_hermitian(h))
        throw NonHermitian("spectral_decompose: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const auto& vals = es.eigenvalues();
    const auto& vecs = es.eigenvectors();

    std::vector<std::pair<double, Projection>> out;
    Eigen::Index i = 0;
    while (i < vals.size()) {
        Eigen::Index j = i + 1;
        while (j < vals.size() && vals(j) - vals(j - 1) <= tol_degen) ++j;
        Matrix block = vecs.middleCols(i, j - i);
        double mean = vals.segment(i, j - i).mean();
        out.emplace_back(mean, Projection(Matrix(block * block.adjoint())));
        i = j;
    }
    return out;
}

// Square root of a positive semidefinite Hermitian matrix. Eigenvalues in
// [-tol_psd, 0) are clipped to zero; smaller ones are an error.
inline Matrix psd_sqrt(const Matrix& a, double tol_psd = kTolPsd) {
    if (a.rows() != a.cols())
        throw DimensionMismatch("psd_sqrt: matrix must be square");
    if (!is_hermitian(a))
        throw NonHermitian("psd_sqrt: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    Eigen::VectorXd vals = es.eigenvalues();
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        if (vals(i) < -tol_psd)
            throw Error("psd_sqrt: matrix is not positive semidefinite");
        vals(i) = vals(i) > 0.0 ? std::sqrt(vals(i)) : 0.0;
    }
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
}

// ------------------------------------------------------- common operators

inline Matrix sigma_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

inline Matrix sigma_y() {
    Matrix m(2, 2);
    m << 0, Complex(0, -1), Complex(0, 1), 0;
    return m;
}

inline Matrix sigma_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

}  // namespace qnd
