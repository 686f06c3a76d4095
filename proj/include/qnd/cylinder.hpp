// cylinder.hpp - cylinder functions (finite-window tables on outcome words)
// and tail functionals (window-parameterized evaluation rules).
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/history.hpp"
#include "qnd/operators.hpp"

namespace qnd {

// Function of the outcome coordinates in a window start..end (1-based,
// inclusive), stored as a table over window words in lexicographic order.
class CylinderFunction {
public:
    CylinderFunction(Alphabet alphabet, int start, int end, std::vector<Complex> table)
        : alphabet_(std::move(alphabet)), start_(start), end_(end), table_(std::move(table)) {
        if (start_ < 1 || end_ < start_)
            throw Error("CylinderFunction: need 1 <= start <= end");
        if (table_.size() != word_count(alphabet_.size(), length()))
            throw DimensionMismatch("CylinderFunction: table size must be |alphabet|^length");
    }

    static CylinderFunction constant(Alphabet alphabet, int start, int end, Complex value) {
        std::vector<Complex> t(word_count(alphabet.size(), end - start + 1), value);
        return CylinderFunction(std::move(alphabet), start, end, std::move(t));
    }

    static CylinderFunction indicator(Alphabet alphabet, const HistoryPrefix& prefix) {
        if (prefix.length() == 0) throw Error("CylinderFunction: empty indicator window");
        std::vector<Complex> t(word_count(alphabet.size(), prefix.length()), 0.0);
        t[word_index(prefix.outcomes(), alphabet.size())] = 1.0;
        return CylinderFunction(std::move(alphabet), prefix.start(), prefix.end(), std::move(t));
    }

    const Alphabet& alphabet() const { return alphabet_; }
    int start() const { return start_; }
    int end() const { return end_; }
    int length() const { return end_ - start_ + 1; }
    const std::vector<Complex>& table() const { return table_; }

    Complex value(const Word& window_word) const {
        if (static_cast<int>(window_word.size()) != length())
            throw DimensionMismatch("CylinderFunction: word length must match window");
        return table_[word_index(window_word, alphabet_.size())];
    }

    // Value on a word that starts at step 1 and covers the window.
    Complex value_in_full_word(const Word& full) const {
        if (static_cast<int>(full.size()) < end_)
            throw DimensionMismatch("CylinderFunction: word does not cover the window");
        Word w(full.begin() + (start_ - 1), full.begin() + end_);
        return table_[word_index(w, alphabet_.size())];
    }

    double sup_norm() const {
        double m = 0.0;
        for (const auto& v : table_) m = std::max(m, std::abs(v));
        return m;
    }

    bool is_real_nonnegative(double tol = 1e-12) const {
        for (const auto& v : table_)
            if (std::abs(v.imag()) > tol || v.real() < -tol) return false;
        return true;
    }

    bool is_indicator(double tol = 1e-12) const {
        for (const auto& v : table_)
            if (std::abs(v.imag()) > tol ||
                (std::abs(v.real()) > tol && std::abs(v.real() - 1.0) > tol))
                return false;
        return true;
    }

    CylinderFunction conjugate() const {
        std::vector<Complex> t(table_.size());
        for (std::size_t i = 0; i < table_.size(); ++i) t[i] = std::conj(table_[i]);
        return CylinderFunction(alphabet_, start_, end_, std::move(t));
    }

    CylinderFunction scaled(Complex c) const {
        std::vector<Complex> t(table_.size());
        for (std::size_t i = 0; i < table_.size(); ++i) t[i] = c * table_[i];
        return CylinderFunction(alphabet_, start_, end_, std::move(t));
    }

    // Same function viewed on an enclosing window.
    CylinderFunction extended(int new_start, int new_end) const {
        if (new_start > start_ || new_end < end_)
            throw WindowOverlap("CylinderFunction: extension must enclose the window");
        int new_len = new_end - new_start + 1;
        std::vector<Complex> t(word_count(alphabet_.size(), new_len));
        Word w(static_cast<std::size_t>(new_len), 0);
        std::uint64_t idx = 0;
        do {
            Word sub(w.begin() + (start_ - new_start), w.begin() + (end_ - new_start + 1));
            t[idx++] = table_[word_index(sub, alphabet_.size())];
        } while (next_word(w, alphabet_.size()));
        return CylinderFunction(alphabet_, new_start, new_end, std::move(t));
    }

    friend CylinderFunction pointwise(const CylinderFunction& a, const CylinderFunction& b,
                                      const std::function<Complex(Complex, Complex)>& op) {
        if (!(a.alphabet_ == b.alphabet_))
            throw Error("CylinderFunction: alphabets differ");
        int s = std::min(a.start_, b.start_), e = std::max(a.end_, b.end_);
        CylinderFunction ea = a.extended(s, e), eb = b.extended(s, e);
        std::vector<Complex> t(ea.table_.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = op(ea.table_[i], eb.table_[i]);
        return CylinderFunction(a.alphabet_, s, e, std::move(t));
    }

    friend CylinderFunction operator+(const CylinderFunction& a, const CylinderFunction& b) {
        return pointwise(a, b, [](Complex x, Complex y) { return x + y; });
    }

    friend CylinderFunction operator*(const CylinderFunction& a, const CylinderFunction& b) {
        return pointwise(a, b, [](Complex x, Complex y) { return x * y; });
    }

private:
    Alphabet alphabet_;
    int start_;
    int end_;
    std::vector<Complex> table_;
};

// ------------------------------------------------------------ tail rules

// A window-parameterized evaluation rule: for any truncation window the rule
// assigns a value to each window word. declared_limit_tol is the scale below
// which successive truncations are expected to agree (convergence is checked,
// not assumed). A symmetric functional depends only on the symbol counts of
// the window word, which admits count-based evaluation at large depths.
class TailFunctional {
public:
    using Evaluator = std::function<Complex(const Word&)>;

    TailFunctional(Evaluator evaluate, double declared_limit_tol, bool symmetric)
        : evaluate_(std::move(evaluate)),
          declared_limit_tol_(declared_limit_tol),
          symmetric_(symmetric) {
        if (declared_limit_tol_ <= 0.0)
            throw Error("TailFunctional: declared_limit_tol must be positive");
    }

    // Empirical frequency of one symbol over the window.
    static TailFunctional frequency_of(int symbol_index, double declared_limit_tol = 1e-9) {
        return TailFunctional(
            [symbol_index](const Word& w) {
                int c = 0;
                for (int s : w)
                    if (s == symbol_index) ++c;
                return Complex(static_cast<double>(c) / static_cast<double>(w.size()), 0.0);
            },
            declared_limit_tol, true);
    }

    // Indicator of the frequency of one symbol lying in the open interval.
    static TailFunctional frequency_indicator(int symbol_index, double lo, double hi,
                                              double declared_limit_tol = 1e-2) {
        return TailFunctional(
            [symbol_index, lo, hi](const Word& w) {
                int c = 0;
                for (int s : w)
                    if (s == symbol_index) ++c;
                double f = static_cast<double>(c) / static_cast<double>(w.size());
                return Complex(f > lo && f < hi ? 1.0 : 0.0, 0.0);
            },
            declared_limit_tol, true);
    }

    Complex evaluate(const Word& window_word) const {
        if (window_word.empty()) throw Error("TailFunctional: empty window");
        return evaluate_(window_word);
    }

    double declared_limit_tol() const { return declared_limit_tol_; }
    bool symmetric() const { return symmetric_; }

    CylinderFunction truncate(const Alphabet& alphabet, int start, int end) const {
        std::vector<Complex> t(word_count(alphabet.size(), end - start + 1));
        Word w(static_cast<std::size_t>(end - start + 1), 0);
        std::uint64_t i = 0;
        do t[i++] = evaluate_(w);
        while (next_word(w, alphabet.size()));
        return CylinderFunction(alphabet, start, end, std::move(t));
    }

private:
    Evaluator evaluate_;
    double declared_limit_tol_;
    bool symmetric_;
};

}  // namespace qnd
