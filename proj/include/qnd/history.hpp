// history.hpp - measurement schedules, history operators, and the induced
// history measure on outcome words.
//
// A schedule assigns to step index t = 1, 2, ... a projective instrument.
// Two backends share one interface:
//   * explicit: a concrete instrument per step (possibly one repeated
//     forever); history operators are genuine ordered products.
//   * product blocks: orthogonal label blocks Q_nu with a per-label outcome
//     law; the effect of pinning outcomes is sum_nu (prod_i p(w_i|nu)) Q_nu.
//     This is the operator family induced by measuring independent probe
//     registers and tracing them out, so it has no explicit step operators,
//     but all word-level quantities (effects, probabilities, checks) are
//     defined and exact at any horizon.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/operators.hpp"

namespace qnd {

using Word = std::vector<int>;  // alphabet indices

inline constexpr int kUnboundedHorizon = std::numeric_limits<int>::max();
inline constexpr std::uint64_t kWordEnumerationCap = 1ull << 22;
inline constexpr int kDecoherenceWindowCap = 8;

// ------------------------------------------------------------------ words

// Number of words of the given length; throws when enumeration would be
// unreasonable.
inline std::uint64_t word_count(int alphabet_size, int length,
                                std::uint64_t cap = kWordEnumerationCap) {
    std::uint64_t n = 1;
    for (int i = 0; i < length; ++i) {
        n *= static_cast<std::uint64_t>(alphabet_size);
        if (n > cap)
            throw HorizonExceeded("word_count: enumeration of " + std::to_string(length) +
                                  "-step words exceeds the cap");
    }
    return n;
}

// Lexicographic successor (leftmost coordinate most significant); returns
// false after the last word wraps to the first.
inline bool next_word(Word& w, int alphabet_size) {
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
        if (++*it < alphabet_size) return true;
        *it = 0;
    }
    return false;
}

inline Word word_from_index(std::uint64_t index, int alphabet_size, int length) {
    Word w(static_cast<std::size_t>(length), 0);
    for (int i = length - 1; i >= 0; --i) {
        w[static_cast<std::size_t>(i)] =
            static_cast<int>(index % static_cast<std::uint64_t>(alphabet_size));
        index /= static_cast<std::uint64_t>(alphabet_size);
    }
    return w;
}

inline std::uint64_t word_index(const Word& w, int alphabet_size) {
    std::uint64_t idx = 0;
    for (int s : w) idx = idx * static_cast<std::uint64_t>(alphabet_size) +
                          static_cast<std::uint64_t>(s);
    return idx;
}

inline std::string render_word(const Alphabet& alphabet, const Word& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) out += ',';
        out += alphabet.symbol(w[i]);
    }
    return out;
}

inline Word parse_word(const Alphabet& alphabet, const std::string& text) {
    Word w;
    if (text.empty()) return w;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) w.push_back(alphabet.index_of(tok));
    return w;
}

// ---------------------------------------------------------- history prefix

// Consecutive outcomes starting at step index `start` (1-based). An empty
// outcome list denotes the empty product (identity operator).
class HistoryPrefix {
public:
    HistoryPrefix() = default;
    HistoryPrefix(int start, Word outcomes) : start_(start), outcomes_(std::move(outcomes)) {
        if (start_ < 1) throw Error("HistoryPrefix: start index must be >= 1");
    }
    explicit HistoryPrefix(Word outcomes) : HistoryPrefix(1, std::move(outcomes)) {}

    int start() const { return start_; }
    int length() const { return static_cast<int>(outcomes_.size()); }
    int end() const { return start_ + length() - 1; }  // start-1 when empty
    const Word& outcomes() const { return outcomes_; }

    HistoryPrefix extended(int symbol) const {
        Word w = outcomes_;
        w.push_back(symbol);
        return HistoryPrefix(start_, std::move(w));
    }

private:
    int start_ = 1;
    Word outcomes_;
};

// Outcomes pinned at arbitrary distinct step positions (ascending).
using MaskedWord = std::vector<std::pair<int, int>>;  // (position, symbol)

// ------------------------------------------------------------- schedule

class MeasurementSchedule {
public:
    static MeasurementSchedule from_steps(std::vector<Instrument> steps) {
        if (steps.empty()) throw Error("MeasurementSchedule: at least one step required");
        return MeasurementSchedule(ExplicitBackend{std::move(steps), false});
    }

    static MeasurementSchedule stationary(Instrument step) {
        std::vector<Instrument> steps;
        steps.push_back(std::move(step));
        return MeasurementSchedule(ExplicitBackend{std::move(steps), true});
    }

    // Labels nu = 0..law.size()-1 occupy consecutive basis blocks of the
    // given dimensions; law[nu][s] is the outcome probability of symbol s.
    static MeasurementSchedule product_blocks(Alphabet alphabet,
                                              std::vector<Eigen::Index> block_dims,
                                              std::vector<std::vector<double>> law) {
        if (law.empty() || block_dims.size() != law.size())
            throw DimensionMismatch("MeasurementSchedule: one block per outcome-law row required");
        for (const auto& row : law) {
            if (static_cast<int>(row.size()) != alphabet.size())
                throw DimensionMismatch("MeasurementSchedule: law row size must match alphabet");
            double total = 0.0;
            for (double p : row) {
                if (p < 0.0 || p > 1.0)
                    throw Error("MeasurementSchedule: outcome probabilities must lie in [0,1]");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw Error("MeasurementSchedule: outcome-law rows must sum to 1");
        }
        Eigen::Index dim = 0;
        for (Eigen::Index b : block_dims) {
            if (b < 1) throw Error("MeasurementSchedule: block dimensions must be positive");
            dim += b;
        }
        std::vector<Matrix> q;
        Eigen::Index offset = 0;
        for (Eigen::Index b : block_dims) {
            Matrix p = Matrix::Zero(dim, dim);
            p.block(offset, offset, b, b) = Matrix::Identity(b, b);
            q.push_back(std::move(p));
            offset += b;
        }
        return MeasurementSchedule(ProductBackend{std::move(q), std::move(law)},
                                   std::move(alphabet), dim);
    }

    Eigen::Index dim() const { return dim_; }
    const Alphabet& alphabet() const { return alphabet_; }
    bool has_explicit_steps() const { return std::holds_alternative<ExplicitBackend>(backend_); }

    int horizon() const {
        if (const auto* e = std::get_if<ExplicitBackend>(&backend_))
            return e->stationary ? kUnboundedHorizon : static_cast<int>(e->steps.size());
        return kUnboundedHorizon;
    }

    const Instrument& step(int t) const {
        const auto* e = std::get_if<ExplicitBackend>(&backend_);
        if (!e) throw Error("MeasurementSchedule: product-block schedule has no step operators");
        if (t < 1) throw Error("MeasurementSchedule: step index must be >= 1");
        if (e->stationary) return e->steps.front();
        if (t > static_cast<int>(e->steps.size()))
            throw HorizonExceeded("MeasurementSchedule: step " + std::to_string(t) +
                                  " beyond horizon " + std::to_string(e->steps.size()));
        return e->steps[static_cast<std::size_t>(t - 1)];
    }

    // Ordered product Pi_{w_1}(t_start) ... Pi_{w_k}(t_start+k-1); explicit
    // backend only. Empty prefix yields the identity.
    Matrix prefix_operator(const HistoryPrefix& prefix) const {
        if (!has_explicit_steps())
            throw Error("prefix_operator: schedule has no explicit step operators");
        Matrix m = Matrix::Identity(dim_, dim_);
        for (int i = 0; i < prefix.length(); ++i)
            m *= step(prefix.start() + i)
                     .projection(prefix.outcomes()[static_cast<std::size_t>(i)])
                     .matrix();
        return m;
    }

    // E = Pi Pi^dagger for outcomes pinned at the masked positions.
    Matrix masked_effect(const MaskedWord& mask) const {
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i].first < 1) throw Error("masked_effect: positions must be >= 1");
            if (i && mask[i].first <= mask[i - 1].first)
                throw Error("masked_effect: positions must be strictly ascending");
            if (mask[i].second < 0 || mask[i].second >= alphabet_.size())
                throw UnknownSymbol("masked_effect: symbol index out of range");
        }
        if (const auto* e = std::get_if<ExplicitBackend>(&backend_)) {
            (void)e;
            Matrix m = Matrix::Identity(dim_, dim_);
            for (const auto& [pos, sym] : mask) m *= step(pos).projection(sym).matrix();
            return m * m.adjoint();
        }
        const auto& pb = std::get<ProductBackend>(backend_);
        std::vector<int> counts(static_cast<std::size_t>(alphabet_.size()), 0);
        for (const auto& [pos, sym] : mask) counts[static_cast<std::size_t>(sym)]++;
        Matrix out = Matrix::Zero(dim_, dim_);
        for (std::size_t nu = 0; nu < pb.law.size(); ++nu)
            out += symbol_count_weight(static_cast<int>(nu), counts) * pb.q[nu];
        return out;
    }

    Matrix windowed_effect(int start, const Word& w) const {
        MaskedWord mask;
        mask.reserve(w.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            mask.emplace_back(start + static_cast<int>(i), w[i]);
        return masked_effect(mask);
    }

    Matrix history_effect(const Word& w) const { return windowed_effect(1, w); }

    // Product backend: prod_s law[nu][s]^counts[s], multiplied in fixed
    // alphabet order so the value depends only on the counts (this is what
    // makes word probabilities bit-exactly permutation invariant).
    double symbol_count_weight(int nu, const std::vector<int>& counts) const {
        const auto& pb = product_backend();
        double v = 1.0;
        for (std::size_t s = 0; s < counts.size(); ++s)
            for (int k = 0; k < counts[s]; ++k) v *= pb.law[static_cast<std::size_t>(nu)][s];
        return v;
    }

    // Product-backend accessors.
    bool decoherent_by_construction() const { return !has_explicit_steps(); }
    int label_count() const { return static_cast<int>(product_backend().law.size()); }
    const Matrix& label_projection(int nu) const {
        return product_backend().q.at(static_cast<std::size_t>(nu));
    }
    const std::vector<std::vector<double>>& outcome_law() const { return product_backend().law; }

    // Projections the history effects are built from: per-step projections
    // up to max_step (explicit) or the label projections (product blocks).
    std::vector<Matrix> distinguished_projections(int max_step) const {
        std::vector<Matrix> out;
        if (has_explicit_steps()) {
            int last = std::min(max_step, horizon());
            for (int t = 1; t <= last; ++t)
                for (int s = 0; s < alphabet_.size(); ++s)
                    out.push_back(step(t).projection(s).matrix());
        } else {
            for (int nu = 0; nu < label_count(); ++nu) out.push_back(label_projection(nu));
        }
        return out;
    }

private:
    struct ExplicitBackend {
        std::vector<Instrument> steps;
        bool stationary;
    };
    struct ProductBackend {
        std::vector<Matrix> q;
        std::vector<std::vector<double>> law;
    };

    explicit MeasurementSchedule(ExplicitBackend backend)
        : backend_(std::move(backend)),
          alphabet_(std::get<ExplicitBackend>(backend_).steps.front().alphabet()),
          dim_(std::get<ExplicitBackend>(backend_).steps.front().dim()) {
        const auto& steps = std::get<ExplicitBackend>(backend_).steps;
        for (const auto& s : steps) {
            if (!(s.alphabet() == alphabet_))
                throw Error("MeasurementSchedule: all steps must share one alphabet");
            if (s.dim() != dim_)
                throw DimensionMismatch("MeasurementSchedule: all steps must share one dimension");
        }
    }

    MeasurementSchedule(ProductBackend backend, Alphabet alphabet, Eigen::Index dim)
        : backend_(std::move(backend)), alphabet_(std::move(alphabet)), dim_(dim) {}

    const ProductBackend& product_backend() const {
        const auto* p = std::get_if<ProductBackend>(&backend_);
        if (!p) throw Error("MeasurementSchedule: not a product-block schedule");
        return *p;
    }

    std::variant<ExplicitBackend, ProductBackend> backend_;
    Alphabet alphabet_;
    Eigen::Index dim_;
};

// --------------------------------------------------------------- measure

struct CheckResult {
    bool ok = false;
    double residual = 0.0;
    explicit operator bool() const { return ok; }
};

// mu(prefix) = tr(rho * Pi Pi^dagger) for the pinned window.
inline double lsw_probability(const MeasurementSchedule& schedule, const DensityMatrix& state,
                              const HistoryPrefix& prefix) {
    if (schedule.dim() != state.dim())
        throw DimensionMismatch("lsw_probability: schedule and state dimensions differ");
    Matrix e = schedule.windowed_effect(prefix.start(), prefix.outcomes());
    return (state.matrix() * e).trace().real();
}

// Kolmogorov consistency at one prefix: sum_s mu(prefix.s) == mu(prefix).
inline CheckResult check_consistency(const MeasurementSchedule& schedule,
                                     const DensityMatrix& state, const HistoryPrefix& prefix,
                                     double tol = kTolPartition) {
    double base = lsw_probability(schedule, state, prefix);
    double total = 0.0;
    for (int s = 0; s < schedule.alphabet().size(); ++s)
        total += lsw_probability(schedule, state, prefix.extended(s));
    double residual = std::abs(total - base);
    return {residual <= tol, residual};
}

// Ideal-decoherence identity on the window m..n: for every interior index i
// and every assignment of the other outcomes,
//   sum_{xi_i} E(window word) == E(word with position i freed).
inline CheckResult check_decoherence(const MeasurementSchedule& schedule, int m, int n,
                                     double tol = kTolPartition) {
    if (m < 1 || n < m) throw Error("check_decoherence: need 1 <= m <= n");
    if (schedule.has_explicit_steps() && n > schedule.horizon())
        throw HorizonExceeded("check_decoherence: window end beyond schedule horizon");
    const int len = n - m + 1;
    const int k = schedule.alphabet().size();
    if (len > kDecoherenceWindowCap) {
        // Enumeration is capped; product-block schedules satisfy the
        // identity exactly by construction (outcome-law rows sum to 1).
        if (schedule.decoherent_by_construction()) return {true, 0.0};
        throw HorizonExceeded("check_decoherence: window longer than enumeration cap");
    }
    (void)word_count(k, len);

    double worst = 0.0;
    for (int i = 0; i < len; ++i) {
        // Group full-window effects by the word with position i dropped.
        std::map<Word, Matrix> sums;
        Word w(static_cast<std::size_t>(len), 0);
        do {
            Word reduced;
            reduced.reserve(w.size() - 1);
            for (int j = 0; j < len; ++j)
                if (j != i) reduced.push_back(w[static_cast<std::size_t>(j)]);
            Matrix e = schedule.windowed_effect(m, w);
            auto it = sums.find(reduced);
            if (it == sums.end())
                sums.emplace(std::move(reduced), std::move(e));
            else
                it->second += e;
        } while (next_word(w, k));

        for (const auto& [reduced, sum] : sums) {
            MaskedWord mask;
            for (int j = 0, r = 0; j < len; ++j)
                if (j != i) mask.emplace_back(m + j, reduced[static_cast<std::size_t>(r++)]);
            worst = std::max(worst, max_abs(sum - schedule.masked_effect(mask)));
        }
    }
    return {worst <= tol, worst};
}

// History measure bundling a schedule and a state. Construction probes the
// decoherence identity up to a small window and records the outcome; a
// failing schedule still yields a usable object (the flag tells downstream
// checks what to expect).
class HistoryMeasure {
public:
    HistoryMeasure(MeasurementSchedule schedule, DensityMatrix state,
                   int decoherence_probe_depth = 4)
        : schedule_(std::move(schedule)), state_(std::move(state)) {
        if (schedule_.dim() != state_.dim())
            throw DimensionMismatch("HistoryMeasure: schedule and state dimensions differ");
        int depth = std::min(decoherence_probe_depth, schedule_.horizon());
        auto check = check_decoherence(schedule_, 1, std::max(1, depth));
        decoherence_ok_ = check.ok;
        decoherence_residual_ = check.residual;
    }

    const MeasurementSchedule& schedule() const { return schedule_; }
    const DensityMatrix& state() const { return state_; }
    bool decoherence_ok() const { return decoherence_ok_; }
    double decoherence_residual() const { return decoherence_residual_; }

    double probability(const HistoryPrefix& prefix) const {
        return lsw_probability(schedule_, state_, prefix);
    }
    double probability(const Word& w) const { return probability(HistoryPrefix(w)); }

private:
    MeasurementSchedule schedule_;
    DensityMatrix state_;
    bool decoherence_ok_ = false;
    double decoherence_residual_ = 0.0;
};

}  // namespace qnd
