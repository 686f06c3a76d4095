// Reference indirect-measurement model: a finite label register read out
// through repeated probe measurements. Labels nu in {0..N} occupy orthogonal
// basis blocks; each step reports a symbol from {-1, 1} with law p(.|nu).
//
// Two realizations of the same measure are provided. The block form encodes
// the outcome law directly and supports any horizon. The tensor form builds
// the system-plus-probes space explicitly (one qubit per step, projections
// diagonal in the computational basis) and is capped at six steps; both give
// identical word probabilities on the overlap, which the tests assert.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qnd/cylinder.hpp"
#include "qnd/errors.hpp"
#include "qnd/history.hpp"
#include "qnd/operators.hpp"
#include "qnd/rng.hpp"
#include "qnd/stats.hpp"

namespace qnd {

inline constexpr int kTensorHorizonCap = 6;

// Mixture over labels, optionally with a density inside each basis block.
struct MixtureState {
    std::vector<double> weights;
    std::vector<Matrix> block_states;

    static MixtureState uniform(int label_count) {
        MixtureState s;
        s.weights.assign(static_cast<std::size_t>(label_count),
                         1.0 / static_cast<double>(label_count));
        return s;
    }
    static MixtureState point_mass(int label_count, int label) {
        MixtureState s;
        s.weights.assign(static_cast<std::size_t>(label_count), 0.0);
        s.weights.at(static_cast<std::size_t>(label)) = 1.0;
        return s;
    }
};

struct Trajectory {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    int true_label = 0;
    int horizon = 0;
    Word outcomes;
    std::vector<double> final_posterior;
    std::vector<std::vector<double>> posterior_path;  // filled only on request
    double frequency = 0.0;
    int classified_label = 0;
    double margin = 0.0;
};

struct Classification {
    int label = 0;
    double margin = 0.0;
};

class NdmModel {
  public:
    // Default outcome law p(1|nu) = (nu + 1)/(N + 2): injective with gap 1/(N+2).
    explicit NdmModel(int max_label) : NdmModel(max_label, default_law(max_label)) {}

    NdmModel(int max_label, std::vector<std::vector<double>> outcome_law,
             std::vector<Eigen::Index> block_dims = {})
        : n_(max_label),
          alphabet_({"-1", "1"}),
          law_(std::move(outcome_law)),
          block_dims_(std::move(block_dims)) {
        if (n_ < 0) throw ConfigError("NdmModel: max label must be nonnegative");
        if (block_dims_.empty()) block_dims_.assign(static_cast<std::size_t>(n_) + 1, 1);
        if (law_.size() != static_cast<std::size_t>(n_) + 1 ||
            block_dims_.size() != static_cast<std::size_t>(n_) + 1)
            throw DimensionMismatch("NdmModel: need one law row and one block per label");
        for (const auto& row : law_) {
            if (row.size() != 2) throw DimensionMismatch("NdmModel: law rows must have 2 entries");
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0 || p > 1.0) throw ConfigError("NdmModel: law entries outside [0,1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("NdmModel: law row must sum to 1");
        }
        gamma_ = 1.0;
        for (int a = 0; a <= n_; ++a)
            for (int b = a + 1; b <= n_; ++b)
                gamma_ = std::min(gamma_, std::abs(p_one(a) - p_one(b)));
        if (n_ > 0 && gamma_ <= 1e-12)
            throw ConfigError("NdmModel: outcome law does not separate labels");
    }

    int max_label() const { return n_; }
    int label_count() const { return n_ + 1; }
    const Alphabet& alphabet() const { return alphabet_; }
    const std::vector<std::vector<double>>& outcome_law() const { return law_; }
    const std::vector<Eigen::Index>& block_dims() const { return block_dims_; }
    double p_one(int nu) const { return law_.at(static_cast<std::size_t>(nu))[1]; }
    double separation_gap() const { return gamma_; }

    int dim() const {
        int d = 0;
        for (Eigen::Index b : block_dims_) d += static_cast<int>(b);
        return d;
    }

    MeasurementSchedule schedule() const {
        return MeasurementSchedule::product_blocks(alphabet_, block_dims_, law_);
    }

    // System block tensored with one two-level probe register per step; all
    // projections diagonal, so the schedule decoheres on every window.
    MeasurementSchedule tensor_schedule(int horizon) const {
        if (horizon < 1) throw ConfigError("tensor_schedule: horizon must be >= 1");
        if (horizon > kTensorHorizonCap)
            throw HorizonExceeded("tensor_schedule: explicit probes capped at " +
                                  std::to_string(kTensorHorizonCap) + " steps");
        int d = dim() << horizon;
        std::vector<Instrument> steps;
        for (int t = 1; t <= horizon; ++t) {
            std::vector<Matrix> projections;
            for (int s = 0; s < 2; ++s) {
                Matrix p = Matrix::Zero(d, d);
                for (int b = 0; b < d; ++b)
                    if (((b >> (horizon - t)) & 1) == s) p(b, b) = 1.0;
                projections.push_back(std::move(p));
            }
            steps.emplace_back(alphabet_, std::move(projections));
        }
        return MeasurementSchedule::from_steps(std::move(steps));
    }

    void validate(const MixtureState& omega) const {
        if (omega.weights.size() != static_cast<std::size_t>(label_count()))
            throw DimensionMismatch("MixtureState: one weight per label required");
        double sum = 0.0;
        for (double w : omega.weights) {
            if (w < 0.0) throw ConfigError("MixtureState: negative weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("MixtureState: weights must sum to 1");
        if (!omega.block_states.empty() &&
            omega.block_states.size() != static_cast<std::size_t>(label_count()))
            throw DimensionMismatch("MixtureState: one block state per label required");
    }

    // Block-diagonal density on the system space.
    DensityMatrix density(const MixtureState& omega) const {
        validate(omega);
        int d = dim();
        Matrix m = Matrix::Zero(d, d);
        Eigen::Index offset = 0;
        for (int nu = 0; nu <= n_; ++nu) {
            Eigen::Index bd = block_dims_[static_cast<std::size_t>(nu)];
            m.block(offset, offset, bd, bd) =
                omega.weights[static_cast<std::size_t>(nu)] * block_state(omega, nu);
            offset += bd;
        }
        return DensityMatrix(m);
    }

    // Correlated system-probe density: sum_nu w_nu sigma_nu (x) rho_nu^(x)T
    // with rho_nu = diag(p(-1|nu), p(1|nu)).
    DensityMatrix tensor_density(const MixtureState& omega, int horizon) const {
        validate(omega);
        if (horizon < 1 || horizon > kTensorHorizonCap)
            throw HorizonExceeded("tensor_density: horizon outside the explicit-probe cap");
        int d_sys = dim();
        Matrix total = Matrix::Zero(d_sys << horizon, d_sys << horizon);
        Eigen::Index offset = 0;
        for (int nu = 0; nu <= n_; ++nu) {
            Eigen::Index bd = block_dims_[static_cast<std::size_t>(nu)];
            Matrix sys = Matrix::Zero(d_sys, d_sys);
            sys.block(offset, offset, bd, bd) =
                omega.weights[static_cast<std::size_t>(nu)] * block_state(omega, nu);
            Matrix probe = Matrix::Zero(2, 2);
            probe(0, 0) = law_[static_cast<std::size_t>(nu)][0];
            probe(1, 1) = law_[static_cast<std::size_t>(nu)][1];
            Matrix acc = sys;
            for (int t = 0; t < horizon; ++t) acc = kron(acc, probe);
            total += acc;
            offset += bd;
        }
        return DensityMatrix(total);
    }

  private:
    static std::vector<std::vector<double>> default_law(int max_label) {
        std::vector<std::vector<double>> law;
        for (int nu = 0; nu <= std::max(max_label, 0); ++nu) {
            double p = static_cast<double>(nu + 1) / static_cast<double>(max_label + 2);
            law.push_back({1.0 - p, p});
        }
        return law;
    }

    Matrix block_state(const MixtureState& omega, int nu) const {
        Eigen::Index bd = block_dims_[static_cast<std::size_t>(nu)];
        if (omega.block_states.empty())
            return Matrix::Identity(bd, bd) / static_cast<double>(bd);
        const Matrix& s = omega.block_states[static_cast<std::size_t>(nu)];
        DensityMatrix check(s);  // enforces density invariants per block
        if (s.rows() != bd) throw DimensionMismatch("MixtureState: block state dimension");
        return s;
    }

    int n_;
    Alphabet alphabet_;
    std::vector<std::vector<double>> law_;
    std::vector<Eigen::Index> block_dims_;
    double gamma_ = 1.0;
};

inline double frequency_estimator(const Word& outcomes) {
    if (outcomes.empty()) throw EmptyTrajectory("frequency_estimator: no outcomes");
    std::size_t ones = 0;
    for (int s : outcomes) ones += (s == 1);
    return static_cast<double>(ones) / static_cast<double>(outcomes.size());
}

inline constexpr double kClassifyTieTol = 1e-12;

// Nearest label by outcome frequency; margin is the distance advantage over
// the runner-up. Distances within kClassifyTieTol count as tied and resolve
// to the smaller label, which would otherwise depend on rounding noise. A
// single-label model classifies with margin 1.
inline Classification classify_label(const NdmModel& model, const Word& outcomes) {
    double freq = frequency_estimator(outcomes);
    if (model.max_label() == 0) return {0, 1.0};
    std::vector<double> dist;
    for (int nu = 0; nu <= model.max_label(); ++nu)
        dist.push_back(std::abs(freq - model.p_one(nu)));
    double best = *std::min_element(dist.begin(), dist.end());
    int label = 0;
    while (dist[static_cast<std::size_t>(label)] > best + kClassifyTieTol) ++label;
    double second = std::numeric_limits<double>::infinity();
    for (int nu = 0; nu <= model.max_label(); ++nu)
        if (nu != label) second = std::min(second, dist[static_cast<std::size_t>(nu)]);
    return {label, std::max(0.0, second - dist[static_cast<std::size_t>(label)])};
}

inline Trajectory sample_trajectory(const NdmModel& model, const MixtureState& omega, int horizon,
                                    std::uint64_t seed, std::uint64_t stream = 0,
                                    bool record_path = false) {
    if (horizon < 1) throw ConfigError("sample_trajectory: horizon must be >= 1");
    model.validate(omega);
    CounterRng rng(seed, stream);

    Trajectory tr;
    tr.seed = seed;
    tr.stream = stream;
    tr.horizon = horizon;
    tr.true_label = sample_categorical(rng, omega.weights);
    const auto& row = model.outcome_law()[static_cast<std::size_t>(tr.true_label)];

    int labels = model.label_count();
    std::vector<double> logpost(static_cast<std::size_t>(labels));
    for (int nu = 0; nu < labels; ++nu)
        logpost[static_cast<std::size_t>(nu)] = std::log(omega.weights[static_cast<std::size_t>(nu)]);

    auto normalized = [&]() {
        double lse = log_sum_exp(logpost);
        std::vector<double> p(logpost.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logpost[i] - lse);
        return p;
    };

    tr.outcomes.reserve(static_cast<std::size_t>(horizon));
    if (record_path) tr.posterior_path.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        int s = sample_categorical(rng, row);
        tr.outcomes.push_back(s);
        for (int nu = 0; nu < labels; ++nu)
            logpost[static_cast<std::size_t>(nu)] +=
                std::log(model.outcome_law()[static_cast<std::size_t>(nu)][static_cast<std::size_t>(s)]);
        if (record_path) tr.posterior_path.push_back(normalized());
    }
    tr.final_posterior = normalized();
    tr.frequency = frequency_estimator(tr.outcomes);
    auto cls = classify_label(model, tr.outcomes);
    tr.classified_label = cls.label;
    tr.margin = cls.margin;
    return tr;
}

// Streams are indexed by trajectory number, so the result is independent of
// the worker count and of scheduling order.
inline std::vector<Trajectory> sample_trajectories(const NdmModel& model, const MixtureState& omega,
                                                   int horizon, int count, std::uint64_t seed,
                                                   int jobs = 1, bool record_path = false) {
    if (count < 1) throw ConfigError("sample_trajectories: count must be >= 1");
    model.validate(omega);
    std::vector<Trajectory> out(static_cast<std::size_t>(count));
    auto worker = [&](std::atomic<int>& next) {
        for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1))
            out[static_cast<std::size_t>(k)] = sample_trajectory(
                model, omega, horizon, seed, static_cast<std::uint64_t>(k), record_path);
    };
    if (jobs <= 1) {
        std::atomic<int> next{0};
        worker(next);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back([&] { worker(next); });
        for (auto& t : pool) t.join();
    }
    return out;
}

struct DecompositionTerm {
    int label = 0;
    double f_value = 0.0;
    double weight = 0.0;
    DensityMatrix state;
};

// Exact effect operator of a label function: sum_nu f_nu Q_nu.
inline Matrix label_effect(const NdmModel& model, const std::vector<double>& f_values) {
    if (f_values.size() != static_cast<std::size_t>(model.label_count()))
        throw DimensionMismatch("label_effect: one value per label required");
    auto schedule = model.schedule();
    Matrix op = Matrix::Zero(model.dim(), model.dim());
    for (int nu = 0; nu <= model.max_label(); ++nu)
        op += f_values[static_cast<std::size_t>(nu)] * schedule.label_projection(nu);
    return op;
}

// Tail functional taking the value f_nu on histories whose outcome frequency
// is nearest to p(1|nu). Its images converge to label_effect(model, f).
inline TailFunctional label_functional(const NdmModel& model, std::vector<double> f_values,
                                       double declared_tol = 1e-3) {
    if (f_values.size() != static_cast<std::size_t>(model.label_count()))
        throw DimensionMismatch("label_functional: one value per label required");
    NdmModel copy = model;
    auto eval = [copy, f_values](const Word& w) -> Complex {
        return f_values[static_cast<std::size_t>(classify_label(copy, w).label)];
    };
    return TailFunctional(eval, declared_tol, true);
}

// Restriction of a block-diagonal state to the label blocks, weighted by f.
// Reassembling sum_nu f_nu p_nu state_nu reproduces the dual update of the
// corresponding label effect.
inline std::vector<DecompositionTerm> state_decomposition(const NdmModel& model,
                                                          const MixtureState& omega,
                                                          const std::vector<double>& f_values,
                                                          double tol_null = kTolNullWeight) {
    if (f_values.size() != static_cast<std::size_t>(model.label_count()))
        throw DimensionMismatch("state_decomposition: one value per label required");
    for (double f : f_values)
        if (f < 0.0) throw ConfigError("state_decomposition: f values must be nonnegative");
    model.validate(omega);
    auto schedule = model.schedule();
    Matrix rho = model.density(omega).matrix();

    std::vector<DecompositionTerm> terms;
    for (int nu = 0; nu <= model.max_label(); ++nu) {
        double f = f_values[static_cast<std::size_t>(nu)];
        Matrix q = schedule.label_projection(nu);
        Matrix block = q * rho * q;
        double p = block.trace().real();
        if (f == 0.0 || p <= tol_null) continue;
        terms.push_back({nu, f, p, DensityMatrix(Matrix(block / p))});
    }
    return terms;
}

}  // namespace qnd
