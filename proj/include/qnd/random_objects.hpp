// random_objects.hpp - deterministic random operators, states and schedules
// for verification runs (all randomness flows through CounterRng).
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "qnd/operators.hpp"
#include "qnd/rng.hpp"

namespace qnd {

inline double random_normal(CounterRng& rng) {
    double u1 = 1.0 - rng.next_double();
    double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Matrix random_ginibre(CounterRng& rng, Eigen::Index n) {
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g(i, j) = Complex(random_normal(rng), random_normal(rng));
    return g;
}

inline Matrix random_hermitian(CounterRng& rng, Eigen::Index n, double scale = 1.0) {
    Matrix g = random_ginibre(rng, n);
    return scale * 0.5 * (g + g.adjoint());
}

// Haar-like unitary: QR of a Ginibre matrix with phase-normalized R diagonal.
inline Matrix random_unitary(CounterRng& rng, Eigen::Index n) {
    Matrix g = random_ginibre(rng, n);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i) {
        Complex d = r(i, i);
        double a = std::abs(d);
        q.col(i) *= a > 0.0 ? d / a : Complex(1.0, 0.0);
    }
    return q;
}

inline DensityMatrix random_density(CounterRng& rng, Eigen::Index n) {
    Matrix g = random_ginibre(rng, n);
    Matrix m = g * g.adjoint();
    return DensityMatrix(Matrix(m / m.trace().real()));
}

inline std::vector<double> random_probability_vector(CounterRng& rng, int k) {
    std::vector<double> p(static_cast<std::size_t>(k));
    double total = 0.0;
    for (auto& v : p) {
        v = -std::log(1.0 - rng.next_double());
        total += v;
    }
    for (auto& v : p) v /= total;
    return p;
}

// Random ordered partition of {0..n-1} into k nonempty consecutive ranges.
inline std::vector<int> random_partition_sizes(CounterRng& rng, int n, int k) {
    if (k > n) throw Error("random_partition_sizes: more parts than elements");
    std::vector<int> sizes(static_cast<std::size_t>(k), 1);
    for (int extra = n - k; extra > 0; --extra)
        sizes[static_cast<std::size_t>(sample_categorical(
            rng, std::vector<double>(static_cast<std::size_t>(k), 1.0 / k)))]++;
    return sizes;
}

// Instrument whose projections span consecutive column groups of a unitary.
inline Instrument instrument_from_basis(const Matrix& basis, const Alphabet& alphabet,
                                        const std::vector<int>& sizes) {
    std::vector<Matrix> projections;
    Eigen::Index start = 0;
    for (int s : sizes) {
        Matrix block = basis.middleCols(start, s);
        projections.emplace_back(block * block.adjoint());
        start += s;
    }
    return Instrument(alphabet, std::move(projections));
}

// Schedule steps drawn from one shared eigenbasis (hence mutually commuting
// across steps): each step gets its own random partition of the basis.
inline std::vector<Instrument> random_commuting_steps(CounterRng& rng, const Alphabet& alphabet,
                                                      Eigen::Index dim, int steps) {
    Matrix basis = random_unitary(rng, dim);
    std::vector<Instrument> out;
    for (int t = 0; t < steps; ++t) {
        auto sizes = random_partition_sizes(rng, static_cast<int>(dim), alphabet.size());
        out.push_back(instrument_from_basis(basis, alphabet, sizes));
    }
    return out;
}

}  // namespace qnd
