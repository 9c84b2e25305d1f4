#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/tensor.hpp"

namespace mmr {

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------- folds

struct FoldPlan {
    std::size_t k = 0;
    std::map<std::string, std::size_t> fold_of_user;
    std::vector<std::size_t> positives;  // per fold, in segments
    std::vector<std::size_t> segments;   // per fold
    std::vector<std::string> warnings;

    std::size_t fold_of(const std::string& user) const {
        const auto it = fold_of_user.find(user);
        if (it == fold_of_user.end()) throw ContractError("eval", "user " + user + " has no fold");
        return it->second;
    }
};

// Grouped, stratified assignment. Users are visited by positive count
// (descending, ties by id) and each goes to the fold furthest below its share
// of positives; users without positives balance the negatives instead. Labels
// are per segment; any nonzero label counts as positive.
inline FoldPlan make_folds(const std::vector<std::string>& user_ids, const std::vector<double>& labels,
                           std::size_t k = 5) {
    if (user_ids.size() != labels.size()) {
        throw ContractError("eval", "user_ids and labels differ in length");
    }
    if (k < 2) throw ConfigError("eval", "need at least 2 folds");
    struct UserCount {
        std::string id;
        std::size_t pos = 0, n = 0;
    };
    std::map<std::string, UserCount> by_user;
    for (std::size_t i = 0; i < user_ids.size(); ++i) {
        auto& u = by_user[user_ids[i]];
        u.id = user_ids[i];
        u.n += 1;
        u.pos += labels[i] != 0.0 ? 1 : 0;
    }
    if (by_user.size() < k) {
        throw ConfigError("eval", "need at least " + std::to_string(k) + " users for " +
                                      std::to_string(k) + " folds, got " +
                                      std::to_string(by_user.size()));
    }
    std::vector<UserCount> users;
    for (auto& [id, u] : by_user) users.push_back(u);
    std::stable_sort(users.begin(), users.end(),
                     [](const UserCount& a, const UserCount& b) { return a.pos > b.pos; });

    std::size_t total_pos = 0, total = user_ids.size();
    for (const auto& u : users) total_pos += u.pos;
    const double pos_share = static_cast<double>(total_pos) / static_cast<double>(k);
    const double neg_share = static_cast<double>(total - total_pos) / static_cast<double>(k);

    FoldPlan plan;
    plan.k = k;
    plan.positives.assign(k, 0);
    plan.segments.assign(k, 0);
    std::vector<std::size_t> members(k, 0);
    std::size_t empty = k;
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto& u = users[i];
        const bool must_fill = users.size() - i <= empty;
        std::size_t best = k;
        double best_deficit = -std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < k; ++f) {
            if (must_fill && members[f] != 0) continue;
            const double deficit =
                u.pos > 0 ? pos_share - static_cast<double>(plan.positives[f])
                          : neg_share - static_cast<double>(plan.segments[f] - plan.positives[f]);
            if (best == k || deficit > best_deficit ||
                (deficit == best_deficit && plan.segments[f] < plan.segments[best])) {
                best = f;
                best_deficit = deficit;
            }
        }
        plan.fold_of_user[u.id] = best;
        plan.positives[best] += u.pos;
        plan.segments[best] += u.n;
        if (members[best]++ == 0) --empty;
    }

    const double global = static_cast<double>(total_pos) / static_cast<double>(total);
    for (std::size_t f = 0; f < k; ++f) {
        const double frac =
            static_cast<double>(plan.positives[f]) / static_cast<double>(plan.segments[f]);
        if (global > 0.0 && std::abs(frac - global) > 0.1 * global) {
            plan.warnings.push_back("fold " + std::to_string(f) + " positive fraction " +
                                    std::to_string(frac) + " vs global " + std::to_string(global));
        }
    }
    return plan;
}

// Throws unless every user's segments sit in a single fold and no fold's
// training users overlap its test users.
inline void assert_no_leakage(const FoldPlan& plan, const std::vector<std::string>& user_ids) {
    for (std::size_t f = 0; f < plan.k; ++f) {
        std::set<std::string> train, test;
        for (const auto& u : user_ids) (plan.fold_of(u) == f ? test : train).insert(u);
        for (const auto& u : test) {
            if (train.count(u) != 0) {
                throw ContractError("eval", "user " + u + " appears in train and test of fold " +
                                                std::to_string(f));
            }
        }
    }
}

// ---------------------------------------------------------------- metrics

// Rank-sum AUROC with average ranks for ties.
inline double auroc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw ContractError("eval", "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double n_pos = 0, rank_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0.0) {
            n_pos += 1;
            rank_sum += rank[i];
        }
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("eval", "AUROC needs both classes present");
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty()) throw ContractError("eval", "MAE of empty input");
    if (pred.size() != truth.size()) throw ContractError("eval", "pred and truth differ in length");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

// F1 of the positive class; `pred` holds probabilities thresholded at 0.5.
inline double f1(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty()) throw ContractError("eval", "F1 of empty input");
    if (pred.size() != truth.size()) throw ContractError("eval", "pred and truth differ in length");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= 0.5, t = truth[i] != 0.0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

// ---------------------------------------------------------------- probes

enum class TaskKind { classification, regression };
enum class MetricKind { auroc, mae, f1 };

inline const char* to_string(MetricKind m) {
    switch (m) {
        case MetricKind::auroc: return "auroc";
        case MetricKind::mae: return "mae";
        case MetricKind::f1: return "f1";
    }
    return "?";
}

struct ProbeSpec {
    std::size_t iterations = 500;
    double lr = 0.1;
    double l2 = 1e-3;          // logistic weight decay
    double ridge_lambda = 1e-3;
    std::size_t threads = 1;
};

struct ProbeReport {
    MetricKind metric = MetricKind::auroc;
    std::vector<double> per_fold;  // NaN for skipped folds
    double mean = 0, min = 0, max = 0;
    std::vector<std::string> warnings;

    std::size_t evaluated() const {
        return static_cast<std::size_t>(
            std::count_if(per_fold.begin(), per_fold.end(), [](double v) { return !std::isnan(v); }));
    }
};

namespace eval_detail {

struct Standardizer {
    std::vector<double> mean, sd;

    static Standardizer fit(const Matrix& x, const std::vector<std::size_t>& rows) {
        const std::size_t d = x[rows.front()].size();
        Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        for (auto r : rows)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[r][j];
        for (auto& m : s.mean) m /= static_cast<double>(rows.size());
        for (auto r : rows)
            for (std::size_t j = 0; j < d; ++j) s.sd[j] += std::pow(x[r][j] - s.mean[j], 2);
        for (auto& v : s.sd) {
            v = std::sqrt(v / static_cast<double>(rows.size()));
            if (v < 1e-12) v = 1.0;
        }
        return s;
    }

    std::vector<double> apply(const Matrix& x, const std::vector<std::size_t>& rows) const {
        const std::size_t d = mean.size();
        std::vector<double> out(rows.size() * d);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (x[rows[i]][j] - mean[j]) / sd[j];
        return out;
    }
};

inline std::vector<double> sigmoid_scores(const std::vector<double>& x, std::size_t d,
                                          const std::vector<double>& w, double b) {
    const std::size_t n = x.size() / d;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        double z = b;
        for (std::size_t j = 0; j < d; ++j) z += x[i * d + j] * w[j];
        p[i] = 1.0 / (1.0 + std::exp(-z));
    }
    return p;
}

}  // namespace eval_detail

struct LogisticModel {
    std::vector<double> w;
    double b = 0;
};

// Class-weighted, L2-regularized logistic regression by full-batch gradient
// descent. `x` is row-major [n x d], already standardized.
inline LogisticModel fit_logistic(const std::vector<double>& x, std::size_t d,
                                  const std::vector<double>& y, const ProbeSpec& spec) {
    const std::size_t n = y.size();
    double n_pos = 0;
    for (double v : y) n_pos += v != 0.0;
    std::vector<double> cw(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double nc = y[i] != 0.0 ? n_pos : static_cast<double>(n) - n_pos;
        cw[i] = 1.0 / (2.0 * nc);  // weight n / (2 n_c), then a mean over n
    }
    const Tensor X({n, d}, x), Y({n, 1}, y), C({n, 1}, cw);
    Tensor w = Tensor::zeros({d, 1}, true), b = Tensor::zeros({1}, true);
    for (std::size_t it = 0; it < spec.iterations; ++it) {
        w.zero_grad();
        b.zero_grad();
        Tape tape;
        TapeScope scope(tape);
        const auto z = ops::add(ops::matmul(X, w), b);
        const auto nll = ops::sum(ops::mul(C, ops::sub(ops::softplus(z), ops::mul(Y, z))));
        tape.backward(ops::add(nll, ops::scale(ops::sum(ops::square(w)), 0.5 * spec.l2)));
        for (std::size_t j = 0; j < d; ++j) w.values()[j] -= spec.lr * w.grad()[j];
        b.values()[0] -= spec.lr * b.grad()[0];
    }
    if (!all_finite(w) || !std::isfinite(b.values()[0])) {
        throw NumericError("eval", "logistic probe diverged");
    }
    return {w.values(), b.values()[0]};
}

struct RidgeModel {
    std::vector<double> w;
    double b = 0;
};

// Closed-form ridge on centred targets; the intercept is unpenalized.
inline RidgeModel fit_ridge(const std::vector<double>& x, std::size_t d, const std::vector<double>& y,
                            double lambda) {
    const std::size_t n = y.size();
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd Y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) X(i, j) = x[i * d + j];
        Y(i) = y[i];
    }
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const double ym = Y.mean();
    X.rowwise() -= xm;
    Y.array() -= ym;
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd w = A.ldlt().solve(X.transpose() * Y);
    RidgeModel m;
    m.w.assign(w.data(), w.data() + d);
    m.b = ym - xm.dot(w);
    return m;
}

// Frozen-feature probe over a fold plan: train on k-1 folds, score the held
// out one. Folds are independent and may run on several threads.
inline ProbeReport probe(const Matrix& features, const std::vector<double>& labels,
                         const std::vector<std::string>& user_ids, TaskKind task, MetricKind metric,
                         const FoldPlan& plan, const ProbeSpec& spec = {}) {
    const std::size_t n = features.size();
    if (n == 0 || labels.size() != n || user_ids.size() != n) {
        throw ContractError("eval", "probe inputs must be non-empty and equal in length");
    }
    if ((task == TaskKind::regression) != (metric == MetricKind::mae)) {
        throw ConfigError("eval", std::string("metric ") + to_string(metric) + " does not fit the task");
    }
    const std::size_t d = features[0].size();
    for (const auto& row : features) {
        if (row.size() != d) throw ShapeError("eval", "ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw NumericError("eval", "non-finite feature");
    }
    assert_no_leakage(plan, user_ids);

    ProbeReport report;
    report.metric = metric;
    report.per_fold.assign(plan.k, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> fold_warning(plan.k);

    auto run_fold = [&](std::size_t f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (plan.fold_of(user_ids[i]) == f ? test : train).push_back(i);
        if (train.empty() || test.empty()) {
            fold_warning[f] = "fold " + std::to_string(f) + " skipped: empty split";
            return;
        }
        const auto scaler = eval_detail::Standardizer::fit(features, train);
        const auto xtr = scaler.apply(features, train), xte = scaler.apply(features, test);
        std::vector<double> ytr, yte;
        for (auto i : train) ytr.push_back(labels[i]);
        for (auto i : test) yte.push_back(labels[i]);
        if (task == TaskKind::regression) {
            const auto m = fit_ridge(xtr, d, ytr, spec.ridge_lambda);
            std::vector<double> pred(test.size(), m.b);
            for (std::size_t i = 0; i < test.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) pred[i] += xte[i * d + j] * m.w[j];
            report.per_fold[f] = mae(pred, yte);
            return;
        }
        const auto pos = std::count_if(ytr.begin(), ytr.end(), [](double v) { return v != 0.0; });
        if (pos == 0 || static_cast<std::size_t>(pos) == ytr.size()) {
            fold_warning[f] = "fold " + std::to_string(f) + " skipped: single-class training split";
            return;
        }
        const auto m = fit_logistic(xtr, d, ytr, spec);
        const auto p = eval_detail::sigmoid_scores(xte, d, m.w, m.b);
        if (metric == MetricKind::f1) {
            report.per_fold[f] = f1(p, yte);
            return;
        }
        try {
            report.per_fold[f] = auroc(p, yte);
        } catch (const UndefinedMetric&) {
            fold_warning[f] = "fold " + std::to_string(f) + " skipped: single-class test split";
        }
    };

    const std::size_t threads = std::clamp<std::size_t>(spec.threads, 1, plan.k);
    if (threads == 1) {
        for (std::size_t f = 0; f < plan.k; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t f = t; f < plan.k; f += threads) run_fold(f);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (const auto& w : fold_warning)
        if (!w.empty()) report.warnings.push_back(w);
    std::vector<double> done;
    for (double v : report.per_fold)
        if (!std::isnan(v)) done.push_back(v);
    if (done.empty()) throw UndefinedMetric("eval", "every fold was skipped");
    report.mean = std::accumulate(done.begin(), done.end(), 0.0) / static_cast<double>(done.size());
    report.min = *std::min_element(done.begin(), done.end());
    report.max = *std::max_element(done.begin(), done.end());
    return report;
}

// ---------------------------------------------------------------- geometry

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

struct SilhouetteResult {
    double score = 0;
    std::size_t points = 0;
    std::vector<std::string> warnings;
};

inline SilhouetteResult silhouette(const Matrix& x, const std::vector<int>& groups) {
    if (x.size() != groups.size()) throw ContractError("eval", "points and groups differ in length");
    std::map<int, std::size_t> sizes;
    for (int g : groups) ++sizes[g];
    SilhouetteResult out;
    for (const auto& [g, s] : sizes) {
        if (s < 2) out.warnings.push_back("group " + std::to_string(g) + " is a singleton; excluded");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (sizes[groups[i]] >= 2) keep.push_back(i);
    std::set<int> live;
    for (auto i : keep) live.insert(groups[i]);
    if (live.size() < 2) throw UndefinedMetric("eval", "silhouette needs two groups of two or more points");

    double total = 0;
    for (auto i : keep) {
        std::map<int, double> dist;
        for (auto j : keep)
            if (j != i) dist[groups[j]] += euclidean(x[i], x[j]);
        const double a = dist[groups[i]] / static_cast<double>(sizes[groups[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [g, s] : dist)
            if (g != groups[i]) b = std::min(b, s / static_cast<double>(sizes[g]));
        const double m = std::max(a, b);
        total += m > 0 ? (b - a) / m : 0.0;
    }
    out.points = keep.size();
    out.score = total / static_cast<double>(keep.size());
    return out;
}

struct DistanceSummary {
    std::vector<std::string> users;   // sorted
    std::vector<double> distances;    // pairs (i<j) in row-major order
    double mean = 0, sd = 0, min = 0, median = 0, max = 0;
};

// Mean embedding per user, then all pairwise Euclidean distances.
inline DistanceSummary pairwise_user_distances(const Matrix& x, const std::vector<std::string>& user_ids) {
    if (x.size() != user_ids.size()) throw ContractError("eval", "points and users differ in length");
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> acc;
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto& [sum, n] = acc[user_ids[i]];
        if (sum.empty()) sum.assign(x[i].size(), 0.0);
        for (std::size_t j = 0; j < x[i].size(); ++j) sum[j] += x[i][j];
        ++n;
    }
    if (acc.size() < 2) throw ContractError("eval", "pairwise distances need at least two users");
    DistanceSummary out;
    Matrix means;
    for (auto& [u, p] : acc) {
        out.users.push_back(u);
        for (auto& v : p.first) v /= static_cast<double>(p.second);
        means.push_back(p.first);
    }
    for (std::size_t i = 0; i < means.size(); ++i)
        for (std::size_t j = i + 1; j < means.size(); ++j) out.distances.push_back(euclidean(means[i], means[j]));
    auto sorted = out.distances;
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    out.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / m;
    for (double v : sorted) out.sd += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(out.sd / m);
    out.min = sorted.front();
    out.max = sorted.back();
    const std::size_t h = sorted.size() / 2;
    out.median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    return out;
}

struct HistogramBin {
    double lo, hi;
    std::size_t count;
};

inline std::vector<HistogramBin> histogram(const std::vector<double>& v, std::size_t bins) {
    if (v.empty() || bins == 0) throw ContractError("eval", "histogram needs values and bins");
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<HistogramBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) out[b] = {lo + width * b, lo + width * (b + 1), 0};
    for (double x : v) {
        auto b = static_cast<std::size_t>((x - lo) / width);
        ++out[std::min(b, bins - 1)].count;
    }
    return out;
}

struct Pca2Result {
    Matrix coords;                 // [n][2]
    std::array<double, 2> variance{};
    Matrix axes;                   // [2][d]
};

// Top two principal axes by power iteration with deflation. Each axis is
// signed so its largest-magnitude component is positive.
inline Pca2Result pca2(const Matrix& x) {
    if (x.size() < 3) throw ContractError("eval", "pca2 needs at least 3 points");
    const std::size_t n = x.size(), d = x[0].size();
    if (d < 2) throw ContractError("eval", "pca2 needs dimension >= 2");
    std::vector<double> mean(d, 0.0);
    for (const auto& r : x)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd centred(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centred(i, j) = x[i][j] - mean[j];
    cov = centred.transpose() * centred / static_cast<double>(n - 1);
    const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);

    Pca2Result out;
    for (int axis = 0; axis < 2; ++axis) {
        Eigen::VectorXd v(d);
        for (std::size_t j = 0; j < d; ++j) v(j) = 1.0 + 0.01 * static_cast<double>(j);
        v.normalize();
        double lambda = 0;
        for (int it = 0; it < 20000; ++it) {
            Eigen::VectorXd next = cov * v;
            const double norm = next.norm();
            if (norm <= 1e-14 * scale) {
                lambda = 0;
                v.setZero();
                break;
            }
            next /= norm;
            const double change = std::min((next - v).norm(), (next + v).norm());
            v = next;
            lambda = v.dot(cov * v);
            if (change < 1e-14) break;
        }
        if (v.norm() > 0) {
            Eigen::Index big;
            v.cwiseAbs().maxCoeff(&big);
            if (v(big) < 0) v = -v;
        }
        out.variance[axis] = std::max(lambda, 0.0);
        out.axes.emplace_back(v.data(), v.data() + d);
        cov -= lambda * v * v.transpose();
    }
    out.coords.assign(n, std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 2; ++a)
            for (std::size_t j = 0; j < d; ++j) out.coords[i][a] += centred(i, j) * out.axes[a][j];
    return out;
}

// ---------------------------------------------------------------- baselines

// [mean, std, p25, p50, p75, min, max] of a segment; percentiles by linear
// interpolation between order statistics.
inline std::vector<double> stat_features(const std::vector<double>& x) {
    if (x.empty()) throw ContractError("eval", "stat features of an empty segment");
    auto s = x;
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    const double m = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double var = 0;
    for (double v : s) var += (v - m) * (v - m);
    auto pct = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, s.size() - 1);
        return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
    };
    return {m, std::sqrt(var / n), pct(0.25), pct(0.5), pct(0.75), s.front(), s.back()};
}

// 1 for elevated (90-130 bpm), 0 for normal (60-90 bpm), -1 otherwise.
inline int hr_group(double hr_bpm) {
    if (hr_bpm >= 90.0 && hr_bpm <= 130.0) return 1;
    if (hr_bpm >= 60.0 && hr_bpm < 90.0) return 0;
    return -1;
}

}  // namespace mmr
