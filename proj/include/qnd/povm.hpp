// povm.hpp - the operator-valued map Phi on cylinder functions, its duality
// with the history measure, tail limits, and the induced state update.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "qnd/cylinder.hpp"
#include "qnd/history.hpp"
#include "qnd/operators.hpp"
#include "qnd/stats.hpp"

namespace qnd {

inline constexpr std::uint64_t kPhiBlockWords = 4096;

// Phi(f) = sum over window words w of f(w) * E_w, with E_w the stretch
// effect on f's own window. Summation runs in fixed lexicographic blocks of
// kPhiBlockWords and the block sums are reduced in order, so the result is
// bitwise independent of the number of worker threads.
inline Matrix phi_cylinder(const MeasurementSchedule& schedule, const CylinderFunction& f,
                           int jobs = 1) {
    if (!(schedule.alphabet() == f.alphabet()))
        throw Error("phi_cylinder: schedule and function alphabets differ");
    const int k = schedule.alphabet().size();
    const int len = f.length();
    const std::uint64_t words = word_count(k, len);
    const Eigen::Index d = schedule.dim();

    const std::uint64_t blocks = (words + kPhiBlockWords - 1) / kPhiBlockWords;
    std::vector<Matrix> partial(static_cast<std::size_t>(blocks));

    auto run_block = [&](std::uint64_t b) {
        Matrix acc = Matrix::Zero(d, d);
        std::uint64_t lo = b * kPhiBlockWords;
        std::uint64_t hi = std::min(words, lo + kPhiBlockWords);
        Word w = word_from_index(lo, k, len);
        for (std::uint64_t i = lo; i < hi; ++i) {
            Complex c = f.table()[i];
            if (c != Complex(0.0, 0.0)) acc += c * schedule.windowed_effect(f.start(), w);
            next_word(w, k);
        }
        partial[static_cast<std::size_t>(b)] = std::move(acc);
    };

    if (jobs <= 1 || blocks <= 1) {
        for (std::uint64_t b = 0; b < blocks; ++b) run_block(b);
    } else {
        std::atomic<std::uint64_t> next{0};
        std::vector<std::thread> pool;
        int n = std::min<std::uint64_t>(static_cast<std::uint64_t>(jobs), blocks);
        for (int t = 0; t < n; ++t)
            pool.emplace_back([&] {
                for (std::uint64_t b = next.fetch_add(1); b < blocks; b = next.fetch_add(1))
                    run_block(b);
            });
        for (auto& t : pool) t.join();
    }

    Matrix out = Matrix::Zero(d, d);
    for (const auto& p : partial) out += p;
    return out;
}

// Integral of f against the history measure, via plain word enumeration of
// scalar probabilities (kept as an independent path from phi_cylinder).
inline Complex cylinder_integral(const MeasurementSchedule& schedule, const DensityMatrix& state,
                                 const CylinderFunction& f) {
    Complex total = 0.0;
    Word w(static_cast<std::size_t>(f.length()), 0);
    std::uint64_t i = 0;
    do {
        if (f.table()[i] != Complex(0.0, 0.0))
            total += f.table()[i] * lsw_probability(schedule, state, HistoryPrefix(f.start(), w));
        ++i;
    } while (next_word(w, schedule.alphabet().size()));
    return total;
}

// omega(Phi(f)) == integral of f d mu_omega.
inline CheckResult phi_duality_check(const MeasurementSchedule& schedule,
                                     const DensityMatrix& state, const CylinderFunction& f,
                                     double tol = 1e-12) {
    Complex lhs = (state.matrix() * phi_cylinder(schedule, f)).trace();
    Complex rhs = cylinder_integral(schedule, state, f);
    double residual = std::abs(lhs - rhs);
    return {residual <= tol, residual};
}

// Phi of a disjoint union of cylinder indicators equals the sum of the
// parts' images. Parts must be 0/1 tables and pairwise disjoint.
inline CheckResult phi_sigma_additivity_check(const MeasurementSchedule& schedule,
                                              const std::vector<CylinderFunction>& parts,
                                              double tol = kTolPartition) {
    if (parts.empty()) throw Error("phi_sigma_additivity_check: no parts");
    for (const auto& p : parts)
        if (!p.is_indicator())
            throw Error("phi_sigma_additivity_check: parts must be indicator functions");
    for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::size_t j = i + 1; j < parts.size(); ++j)
            if ((parts[i] * parts[j]).sup_norm() > 1e-12)
                throw OverlapDetected("phi_sigma_additivity_check: parts " + std::to_string(i) +
                                      " and " + std::to_string(j) + " overlap");

    CylinderFunction uni = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) uni = uni + parts[i];

    Matrix sum = Matrix::Zero(schedule.dim(), schedule.dim());
    for (const auto& p : parts) sum += phi_cylinder(schedule, p);
    double residual = max_abs(phi_cylinder(schedule, uni) - sum);
    return {residual <= tol, residual};
}

// ------------------------------------------------------------- tail limit

struct ConvergenceRecord {
    int depth = 0;  // 1-based index into the window schedule
    int window_start = 0;
    int window_end = 0;
    double delta = 0.0;  // max-norm change versus the previous truncation
    double checksum = 0.0;  // Frobenius norm of the truncation
};

struct TailResult {
    Matrix op;
    std::vector<ConvergenceRecord> records;
    bool converged = false;
    double final_delta = 0.0;
};

namespace detail {

// E_nu[f] at window length `len` for a count-symmetric functional under one
// outcome-law row, without enumerating words.
inline Complex symmetric_label_expectation(const TailFunctional& f,
                                           const std::vector<double>& law, int len) {
    Complex total = 0.0;
    for_each_composition(len, static_cast<int>(law.size()), [&](const std::vector<int>& c) {
        double lw = log_multinomial(len, c) + log_product_power(law, c);
        if (!std::isfinite(lw)) return;
        Word canonical;
        canonical.reserve(static_cast<std::size_t>(len));
        for (std::size_t s = 0; s < c.size(); ++s)
            canonical.insert(canonical.end(), static_cast<std::size_t>(c[s]),
                             static_cast<int>(s));
        total += std::exp(lw) * f.evaluate(canonical);
    });
    return total;
}

}  // namespace detail

// Truncate f along the window schedule, mapping each truncation through Phi,
// and track convergence of the images. Windows must move right and grow.
// Explicit schedules are probed for decoherence on each (enumerable part of
// the) window first; product-block schedules satisfy it by construction and
// additionally admit count-based evaluation of symmetric functionals, which
// is how large depths stay tractable.
inline TailResult phi_tail(const MeasurementSchedule& schedule, const TailFunctional& f,
                           const std::vector<std::pair<int, int>>& windows) {
    if (windows.empty()) throw Error("phi_tail: empty window schedule");
    for (std::size_t i = 0; i < windows.size(); ++i) {
        auto [a, b] = windows[i];
        if (a < 1 || b < a) throw Error("phi_tail: bad window");
        if (i > 0 && (windows[i].first < windows[i - 1].first ||
                      windows[i].second <= windows[i - 1].second))
            throw Error("phi_tail: windows must move right and grow");
    }

    TailResult result;
    Matrix prev;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        auto [a, b] = windows[i];
        if (schedule.has_explicit_steps()) {
            int probe_end = std::min(b, a + kDecoherenceWindowCap - 1);
            auto dc = check_decoherence(schedule, a, probe_end);
            if (!dc.ok)
                throw Error("phi_tail: schedule fails decoherence on window " +
                            std::to_string(a) + ".." + std::to_string(b));
        }

        Matrix cur;
        int len = b - a + 1;
        bool enumerable = true;
        try {
            (void)word_count(schedule.alphabet().size(), len);
        } catch (const HorizonExceeded&) {
            enumerable = false;
        }
        if (schedule.decoherent_by_construction() && f.symmetric()) {
            cur = Matrix::Zero(schedule.dim(), schedule.dim());
            for (int nu = 0; nu < schedule.label_count(); ++nu)
                cur += detail::symmetric_label_expectation(
                           f, schedule.outcome_law()[static_cast<std::size_t>(nu)], len) *
                       schedule.label_projection(nu);
        } else if (enumerable) {
            cur = phi_cylinder(schedule, f.truncate(schedule.alphabet(), a, b));
        } else {
            throw HorizonExceeded("phi_tail: window too long to enumerate for this functional");
        }

        ConvergenceRecord rec;
        rec.depth = static_cast<int>(i + 1);
        rec.window_start = a;
        rec.window_end = b;
        rec.delta = i == 0 ? std::numeric_limits<double>::quiet_NaN() : max_abs(cur - prev);
        rec.checksum = cur.norm();
        result.records.push_back(rec);
        prev = std::move(cur);
    }

    result.op = prev;
    result.final_delta = result.records.back().delta;
    result.converged =
        windows.size() >= 2 && result.final_delta <= f.declared_limit_tol();
    return result;
}

// ------------------------------------------------- homomorphism (windows)

struct HomomorphismResult {
    bool ok = false;
    double product_residual = 0.0;
    double commutator_residual = 0.0;
    explicit operator bool() const { return ok; }
};

// Phi(f * chi_delta) == Phi(f) Phi(chi_delta) for an indicator delta whose
// window lies strictly before f's window, plus centrality of Phi(f) against
// the schedule's distinguished projections up to delta's window end.
inline HomomorphismResult phi_homomorphism_check(const MeasurementSchedule& schedule,
                                                 const CylinderFunction& f,
                                                 const CylinderFunction& delta,
                                                 double tol = kTolPartition) {
    if (!delta.is_indicator())
        throw Error("phi_homomorphism_check: delta must be an indicator");
    if (f.start() <= delta.end())
        throw WindowOverlap("phi_homomorphism_check: f's window must lie strictly after delta's");

    Matrix lhs = phi_cylinder(schedule, f * delta);
    Matrix pf = phi_cylinder(schedule, f);
    Matrix rhs = pf * phi_cylinder(schedule, delta);

    HomomorphismResult res;
    res.product_residual = max_abs(lhs - rhs);
    for (const auto& p : schedule.distinguished_projections(f.end()))
        res.commutator_residual = std::max(res.commutator_residual, commutator_norm(pf, p));
    res.ok = res.product_residual <= tol && res.commutator_residual <= tol;
    return res;
}

// ------------------------------------------------------------- dual map

struct DualResult {
    double weight = 0.0;
    DensityMatrix state;
};

// omega -> omega^f for a positive effect operator: weight = tr(rho Phi),
// state = sqrt(Phi) rho sqrt(Phi) normalized.
inline DualResult dual_apply(const DensityMatrix& state, const Matrix& effect,
                             double tol_null = kTolNullWeight) {
    double weight = (state.matrix() * effect).trace().real();
    if (weight <= tol_null)
        throw NullWeight("dual_apply: omega(Phi(f)) is numerically zero");
    Matrix s = psd_sqrt(effect);
    Matrix m = s * state.matrix() * s;
    m = 0.5 * (m + m.adjoint());
    return {weight, DensityMatrix(Matrix(m / m.trace().real()))};
}

// Same update driven by a cylinder function, which must be real and
// nonnegative so that Phi(f) is a positive operator.
inline DualResult dual_apply(const MeasurementSchedule& schedule, const DensityMatrix& state,
                             const CylinderFunction& f, double tol_null = kTolNullWeight) {
    if (!f.is_real_nonnegative())
        throw Error("dual_apply: f must be real and nonnegative");
    return dual_apply(state, phi_cylinder(schedule, f), tol_null);
}

// mu_omega^f(prefix) == weight * mu_{omega^f}(prefix): the left side is the
// direct integral of f * chi_prefix by word enumeration, the right side goes
// through the updated state. Prefixes must end before f's window starts.
inline CheckResult dual_measure_check(const MeasurementSchedule& schedule, const DensityMatrix& state,
                                  const CylinderFunction& f,
                                  const std::vector<HistoryPrefix>& prefixes, double tol = 1e-9) {
    for (const auto& p : prefixes)
        if (p.start() != 1 || p.end() >= f.start())
            throw WindowOverlap("dual_measure_check: prefixes must start at 1 and end before f");
    DualResult dual = dual_apply(schedule, state, f);

    double worst = 0.0;
    for (const auto& prefix : prefixes) {
        CylinderFunction joint =
            prefix.length() == 0
                ? f
                : f * CylinderFunction::indicator(schedule.alphabet(), prefix);
        double lhs = cylinder_integral(schedule, state, joint).real();
        double rhs = dual.weight * lsw_probability(schedule, dual.state, prefix);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return {worst <= tol, worst};
}

}  // namespace qnd
