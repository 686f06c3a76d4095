// Countable disintegration of an exchangeable history measure: conditional
// product measures per label, Choquet weights, and the checks that make the
// decomposition meaningful (reconstruction, 0-1 law, mutual singularity,
// extremality, moment-system uniqueness).
//
// The exact path tabulates the known model. The empirical path rebuilds the
// same objects from sampled trajectories alone: cluster by tail frequency,
// estimate conditionals from sliding windows after a burn-in, and report
// cluster geometry in total-variation distance.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qnd/errors.hpp"
#include "qnd/history.hpp"
#include "qnd/ndm.hpp"
#include "qnd/stats.hpp"

namespace qnd {

inline constexpr double kEpsilonMol = 0.1;
inline constexpr int kMoleculeDepth = 3;
inline constexpr double kBurnInFraction = 0.1;
inline constexpr double kDeltaExt = 1e-3;
inline constexpr int kMinTrajectories = 10;
inline constexpr double kZeroOneBand = 0.02;

struct Disintegration {
    std::vector<int> labels;
    std::vector<double> weights;
    int depth = 0;
    // tables[i][len-1][w] = conditional probability of the length-len word
    // with lexicographic index w, given labels[i]
    std::vector<std::vector<std::vector<double>>> tables;
    bool product_form = false;
    std::vector<std::vector<double>> law;  // per-label step law when product_form

    double conditional(std::size_t label_pos, const Word& w) const {
        if (w.empty()) return 1.0;
        if (static_cast<int>(w.size()) > depth)
            throw HorizonExceeded("Disintegration: word longer than tabulated depth");
        return tables.at(label_pos)[w.size() - 1][word_index(w, 2)];
    }

    double mixture(const Word& w) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i)
            sum += weights[i] * conditional(i, w);
        return sum;
    }
};

struct MoleculeClustering {
    std::vector<int> assignment;            // trajectory index -> cluster
    std::vector<int> cluster_sizes;
    std::vector<double> cluster_frequency;  // mean tail frequency per cluster
    std::vector<std::vector<double>> tv_matrix;
    double epsilon = kEpsilonMol;
    int depth = kMoleculeDepth;
};

struct EmpiricalDisintegration {
    Disintegration disintegration;
    MoleculeClustering clustering;
};

inline double table_tv(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("table_tv: table sizes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return 0.5 * sum;
}

inline std::vector<double> product_table(const std::vector<double>& law_row, int len) {
    std::vector<double> table(word_count(law_row.size(), len));
    Word w(static_cast<std::size_t>(len), 0);
    std::size_t idx = 0;
    do {
        double p = 1.0;
        for (int s : w) p *= law_row[static_cast<std::size_t>(s)];
        table[idx++] = p;
    } while (next_word(w, static_cast<int>(law_row.size())));
    return table;
}

inline Disintegration disintegrate_exact(const NdmModel& model, const MixtureState& omega,
                                         int depth) {
    if (depth < 1) throw ConfigError("disintegrate_exact: depth must be >= 1");
    word_count(2, depth);  // enforces the enumeration cap
    model.validate(omega);
    Disintegration dis;
    dis.depth = depth;
    dis.product_form = true;
    dis.law = model.outcome_law();
    for (int nu = 0; nu <= model.max_label(); ++nu) {
        dis.labels.push_back(nu);
        dis.weights.push_back(omega.weights[static_cast<std::size_t>(nu)]);
        std::vector<std::vector<double>> per_len;
        for (int len = 1; len <= depth; ++len)
            per_len.push_back(product_table(model.outcome_law()[static_cast<std::size_t>(nu)], len));
        dis.tables.push_back(std::move(per_len));
    }
    return dis;
}

// Worst deviation of sum_nu w_nu mu(w|nu) from the schedule measure over all
// tabulated words.
inline CheckResult disintegration_reconstruction(const Disintegration& dis,
                                                 const MeasurementSchedule& schedule,
                                                 const DensityMatrix& state, double tol = 1e-10) {
    double worst = 0.0;
    for (int len = 1; len <= dis.depth; ++len) {
        Word w(static_cast<std::size_t>(len), 0);
        do {
            double direct = lsw_probability(schedule, state, HistoryPrefix(w));
            worst = std::max(worst, std::abs(dis.mixture(w) - direct));
        } while (next_word(w, 2));
    }
    return {worst <= tol, worst};
}

namespace detail {

// Depth-d window counts from the post-burn-in segment; shorter tables come
// from marginalizing the trailing coordinate, so extension consistency is
// exact.
inline std::vector<std::vector<double>> window_tables(const std::vector<const Trajectory*>& members,
                                                      int burn, int depth) {
    std::vector<double> counts(word_count(2, depth), 0.0);
    double total = 0.0;
    for (const Trajectory* t : members) {
        const Word& w = t->outcomes;
        for (std::size_t j = static_cast<std::size_t>(burn);
             j + static_cast<std::size_t>(depth) <= w.size(); ++j) {
            std::size_t idx = 0;
            for (int k = 0; k < depth; ++k)
                idx = idx * 2 + static_cast<std::size_t>(w[j + static_cast<std::size_t>(k)]);
            counts[idx] += 1.0;
            total += 1.0;
        }
    }
    std::vector<std::vector<double>> tables(static_cast<std::size_t>(depth));
    tables[static_cast<std::size_t>(depth) - 1] = counts;
    for (double& c : tables[static_cast<std::size_t>(depth) - 1]) c /= total;
    for (int len = depth - 1; len >= 1; --len) {
        const auto& fine = tables[static_cast<std::size_t>(len)];
        std::vector<double> coarse(word_count(2, len));
        for (std::size_t w = 0; w < coarse.size(); ++w) coarse[w] = fine[2 * w] + fine[2 * w + 1];
        tables[static_cast<std::size_t>(len) - 1] = std::move(coarse);
    }
    return tables;
}

}  // namespace detail

// Unsupervised rebuild of the disintegration from trajectories. Single-link
// clustering joins tail frequencies whose product measures sit within
// epsilon in depth-d total variation; cluster conditionals must then be
// 2*epsilon-separated or the molecule structure is ambiguous.
inline EmpiricalDisintegration disintegrate_empirical(const std::vector<Trajectory>& trajectories,
                                                      int depth = kMoleculeDepth,
                                                      double epsilon = kEpsilonMol,
                                                      int min_trajectories = kMinTrajectories) {
    if (static_cast<int>(trajectories.size()) < min_trajectories)
        throw InsufficientData("disintegrate_empirical: need at least " +
                               std::to_string(min_trajectories) + " trajectories");
    if (depth < 1) throw ConfigError("disintegrate_empirical: depth must be >= 1");

    int horizon = trajectories.front().horizon;
    int burn = static_cast<int>(kBurnInFraction * horizon);
    if (horizon - burn < depth)
        throw InsufficientData("disintegrate_empirical: horizon too short after burn-in");

    std::vector<std::pair<double, std::size_t>> freq(trajectories.size());
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const Word& w = trajectories[i].outcomes;
        if (static_cast<int>(w.size()) != horizon)
            throw InsufficientData("disintegrate_empirical: trajectories must share one horizon");
        Word tail(w.begin() + burn, w.end());
        freq[i] = {frequency_estimator(tail), i};
    }
    std::sort(freq.begin(), freq.end());

    MoleculeClustering clus;
    clus.epsilon = epsilon;
    clus.depth = depth;
    clus.assignment.assign(trajectories.size(), 0);
    std::vector<std::vector<const Trajectory*>> members;
    std::vector<double> freq_sums;
    for (std::size_t i = 0; i < freq.size(); ++i) {
        bool fresh = members.empty() ||
                     product_tv_distance({1.0 - freq[i - 1].first, freq[i - 1].first},
                                         {1.0 - freq[i].first, freq[i].first}, depth) > epsilon;
        if (fresh) {
            members.emplace_back();
            freq_sums.push_back(0.0);
        }
        members.back().push_back(&trajectories[freq[i].second]);
        freq_sums.back() += freq[i].first;
        clus.assignment[freq[i].second] = static_cast<int>(members.size()) - 1;
    }

    Disintegration dis;
    dis.depth = depth;
    for (std::size_t c = 0; c < members.size(); ++c) {
        clus.cluster_sizes.push_back(static_cast<int>(members[c].size()));
        clus.cluster_frequency.push_back(freq_sums[c] / static_cast<double>(members[c].size()));
        dis.labels.push_back(static_cast<int>(c));
        dis.weights.push_back(static_cast<double>(members[c].size()) /
                              static_cast<double>(trajectories.size()));
        dis.tables.push_back(detail::window_tables(members[c], burn, depth));
    }

    clus.tv_matrix.assign(members.size(), std::vector<double>(members.size(), 0.0));
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            double tv = table_tv(dis.tables[a][static_cast<std::size_t>(depth) - 1],
                                 dis.tables[b][static_cast<std::size_t>(depth) - 1]);
            clus.tv_matrix[a][b] = clus.tv_matrix[b][a] = tv;
            closest = std::min(closest, tv);
        }
    if (members.size() > 1 && closest < 2.0 * epsilon)
        throw ClusterAmbiguity("disintegrate_empirical: cluster conditionals are only " +
                               std::to_string(closest) + " apart in total variation");
    return {std::move(dis), std::move(clus)};
}

struct AgreementReport {
    bool label_counts_match = false;
    std::vector<int> label_map;  // cluster position -> exact label position
    double weight_deviation = 1.0;
    bool weights_within_3sigma = false;
    double conditional_tv = 1.0;
};

// Match clusters to exact labels by depth-1 one-probability and compare
// weights (binomial 3 sigma) and conditional tables (total variation).
inline AgreementReport disintegration_agreement(const EmpiricalDisintegration& emp,
                                                const Disintegration& exact,
                                                int trajectory_count) {
    AgreementReport rep;
    rep.label_counts_match = emp.disintegration.labels.size() == exact.labels.size();
    if (!rep.label_counts_match) return rep;

    std::size_t n = exact.labels.size();
    std::vector<bool> used(n, false);
    rep.label_map.assign(n, -1);
    for (std::size_t c = 0; c < n; ++c) {
        double p_emp = emp.disintegration.tables[c][0][1];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < n; ++e) {
            if (used[e]) continue;
            double d = std::abs(p_emp - exact.tables[e][0][1]);
            if (d < best) {
                best = d;
                rep.label_map[c] = static_cast<int>(e);
            }
        }
        used[static_cast<std::size_t>(rep.label_map[c])] = true;
    }

    int depth = std::min(emp.disintegration.depth, exact.depth);
    rep.weight_deviation = 0.0;
    rep.conditional_tv = 0.0;
    bool within = true;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t e = static_cast<std::size_t>(rep.label_map[c]);
        double w = exact.weights[e];
        double dev = std::abs(emp.disintegration.weights[c] - w);
        rep.weight_deviation = std::max(rep.weight_deviation, dev);
        double sigma = std::sqrt(w * (1.0 - w) / static_cast<double>(trajectory_count));
        if (dev > 3.0 * sigma) within = false;
        rep.conditional_tv = std::max(
            rep.conditional_tv,
            table_tv(emp.disintegration.tables[c][static_cast<std::size_t>(depth) - 1],
                     exact.tables[e][static_cast<std::size_t>(depth) - 1]));
    }
    rep.weights_within_3sigma = within;
    return rep;
}

struct ZeroOneReport {
    double lo = 0.0, hi = 1.0;
    std::vector<int> horizons;
    std::vector<std::vector<double>> estimates;  // estimates[label][horizon index]
    std::vector<int> limits;                     // LLN limit per label (0 or 1)
    bool ok = false;                             // final estimates inside the 0-1 bands
};

// Probability, under each conditional product measure, that the outcome
// frequency falls in the open interval (lo, hi), evaluated exactly at a
// ladder of horizons. Ergodicity shows up as convergence to 0 or 1.
inline ZeroOneReport zero_one_law_check(const NdmModel& model, double lo, double hi,
                                        std::vector<int> horizons = {10, 100, 1000, 10000}) {
    if (!(lo < hi)) throw ConfigError("zero_one_law_check: need lo < hi");
    if (horizons.empty()) throw ConfigError("zero_one_law_check: need at least one horizon");
    for (int nu = 0; nu <= model.max_label(); ++nu)
        if (std::abs(lo - model.p_one(nu)) <= 1e-12 || std::abs(hi - model.p_one(nu)) <= 1e-12)
            throw BoundaryPredicate("zero_one_law_check: interval endpoint sits on p(1|" +
                                    std::to_string(nu) + ")");

    ZeroOneReport rep;
    rep.lo = lo;
    rep.hi = hi;
    rep.horizons = std::move(horizons);
    rep.ok = true;
    for (int nu = 0; nu <= model.max_label(); ++nu) {
        double p = model.p_one(nu);
        rep.limits.push_back(lo < p && p < hi ? 1 : 0);
        std::vector<double> row;
        for (int h : rep.horizons) row.push_back(binomial_frequency_probability(h, p, lo, hi));
        double final = row.back();
        if (rep.limits.back() == 1 ? final < 1.0 - kZeroOneBand : final > kZeroOneBand)
            rep.ok = false;
        rep.estimates.push_back(std::move(row));
    }
    return rep;
}

struct SingularityReport {
    std::vector<int> depths;
    // tv[d][a][b]: total variation between conditionals a and b at depths[d]
    std::vector<std::vector<std::vector<double>>> tv;
    std::vector<std::vector<std::vector<double>>> hellinger_ref;  // 1 - (1 - H^2)^depth
    double goal = 0.99;
    bool ok = false;
};

// Pairwise separation of the conditional product measures as depth grows;
// requires the exact (product-form) path for depths beyond the tables.
inline SingularityReport mutual_singularity_check(const Disintegration& dis,
                                                  const std::vector<int>& depths,
                                                  double goal = 0.99) {
    if (dis.labels.size() < 2)
        throw ConfigError("mutual_singularity_check: need at least two labels");
    if (depths.empty()) throw ConfigError("mutual_singularity_check: need at least one depth");
    if (!dis.product_form)
        throw ConfigError("mutual_singularity_check: conditionals must be in product form");

    SingularityReport rep;
    rep.depths = depths;
    rep.goal = goal;
    std::size_t n = dis.labels.size();
    for (int d : depths) {
        if (d < 1) throw ConfigError("mutual_singularity_check: depths must be >= 1");
        std::vector<std::vector<double>> tv(n, std::vector<double>(n, 0.0));
        std::vector<std::vector<double>> hl(n, std::vector<double>(n, 0.0));
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b) {
                tv[a][b] = tv[b][a] = product_tv_distance(dis.law[a], dis.law[b], d);
                double h2 = hellinger_squared(dis.law[a], dis.law[b]);
                hl[a][b] = hl[b][a] = 1.0 - std::pow(1.0 - h2, d);
            }
        rep.tv.push_back(std::move(tv));
        rep.hellinger_ref.push_back(std::move(hl));
    }
    rep.ok = true;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (rep.tv.back()[a][b] < goal) rep.ok = false;
    return rep;
}

struct ExtremalityResult {
    bool extremal = false;
    double residual = 0.0;
    std::vector<double> best_combination;
};

// Feasibility of writing the target table as a convex combination of the
// family tables: minimize ||A c - y|| over the probability simplex by
// enumerating active sets and solving the equality-constrained least
// squares on each. Extremal means even the best combination misses by at
// least delta.
inline ExtremalityResult simplex_fit(const std::vector<std::vector<double>>& family,
                                     const std::vector<double>& target, double delta = kDeltaExt) {
    if (family.empty()) throw ConfigError("simplex_fit: empty family");
    std::size_t m = family.size(), rows = target.size();
    if (m > 16) throw ConfigError("simplex_fit: family too large for subset enumeration");
    for (const auto& col : family)
        if (col.size() != rows) throw DimensionMismatch("simplex_fit: table sizes differ");

    Eigen::MatrixXd a(rows, m);
    Eigen::VectorXd y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        y(static_cast<Eigen::Index>(r)) = target[r];
        for (std::size_t c = 0; c < m; ++c)
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = family[c][r];
    }

    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        std::vector<Eigen::Index> idx;
        for (std::size_t c = 0; c < m; ++c)
            if (mask & (1u << c)) idx.push_back(static_cast<Eigen::Index>(c));
        Eigen::Index k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd sub(rows, k);
        for (Eigen::Index c = 0; c < k; ++c) sub.col(c) = a.col(idx[static_cast<std::size_t>(c)]);
        // KKT system for min ||sub c - y||^2 subject to sum c = 1
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
        kkt.topLeftCorner(k, k) = 2.0 * sub.transpose() * sub;
        kkt.topRightCorner(k, 1).setOnes();
        kkt.bottomLeftCorner(1, k).setOnes();
        Eigen::VectorXd rhs(k + 1);
        rhs.head(k) = 2.0 * sub.transpose() * y;
        rhs(k) = 1.0;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible()) continue;
        Eigen::VectorXd sol = lu.solve(rhs);
        if ((sol.head(k).array() < -1e-12).any()) continue;
        double res = (sub * sol.head(k) - y).norm();
        if (res < best) {
            best = res;
            best_c.setZero();
            for (Eigen::Index c = 0; c < k; ++c)
                best_c(idx[static_cast<std::size_t>(c)]) = std::max(0.0, sol(c));
        }
    }

    ExtremalityResult out;
    out.residual = best;
    out.extremal = best >= delta;
    out.best_combination.assign(best_c.data(), best_c.data() + best_c.size());
    return out;
}

// Is conditional label_pos expressible as a mixture of the other family
// members on depth-d cylinders?
inline ExtremalityResult extremality_check(const Disintegration& dis, std::size_t label_pos,
                                           double delta = kDeltaExt) {
    if (label_pos >= dis.labels.size())
        throw ConfigError("extremality_check: label position out of range");
    std::vector<std::vector<double>> family;
    for (std::size_t i = 0; i < dis.labels.size(); ++i)
        if (i != label_pos)
            family.push_back(dis.tables[i][static_cast<std::size_t>(dis.depth) - 1]);
    if (family.empty()) return {true, std::numeric_limits<double>::infinity(), {}};
    return simplex_fit(family, dis.tables[label_pos][static_cast<std::size_t>(dis.depth) - 1],
                       delta);
}

// The mixture itself, tested against the whole family; a nondegenerate
// mixture is reproduced exactly, so it is not extremal.
inline ExtremalityResult mixture_extremality_check(const Disintegration& dis,
                                                   double delta = kDeltaExt) {
    std::vector<std::vector<double>> family;
    for (std::size_t i = 0; i < dis.labels.size(); ++i)
        family.push_back(dis.tables[i][static_cast<std::size_t>(dis.depth) - 1]);
    std::size_t words = family.front().size();
    std::vector<double> target(words, 0.0);
    Word w(static_cast<std::size_t>(dis.depth), 0);
    std::size_t idx = 0;
    do target[idx++] = dis.mixture(w);
    while (next_word(w, 2));
    return simplex_fit(family, target, delta);
}

struct MomentRecovery {
    std::vector<double> weights;
    double condition = 0.0;
};

// Moments m_k = sum_nu w_nu p(1|nu)^k, k = 0..N, form a Vandermonde system
// in the separated values p(1|nu); its solution pins the weights uniquely.
inline MomentRecovery recover_weights_from_moments(const std::vector<double>& p_values,
                                                   const std::vector<double>& moments) {
    std::size_t n = p_values.size();
    if (moments.size() != n)
        throw DimensionMismatch("recover_weights_from_moments: need one moment per label");
    Eigen::MatrixXd v(n, n);
    Eigen::VectorXd m(n);
    for (std::size_t k = 0; k < n; ++k) {
        m(static_cast<Eigen::Index>(k)) = moments[k];
        for (std::size_t nu = 0; nu < n; ++nu)
            v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(nu)) =
                std::pow(p_values[nu], static_cast<double>(k));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin <= 1e-12)
        throw ConfigError("recover_weights_from_moments: moment system is singular");
    MomentRecovery out;
    out.condition = svd.singularValues()(0) / smin;
    Eigen::VectorXd w = svd.solve(m);
    out.weights.assign(w.data(), w.data() + w.size());
    return out;
}

}  // namespace qnd
