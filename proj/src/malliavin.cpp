#include "mcfd/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcfd {

Vec MalliavinEstimator::default_eta(std::size_t dim, double h) {
    return Vec::Constant(static_cast<Eigen::Index>(dim), 5.0 / std::sqrt(h));
}

MalliavinEstimator MalliavinEstimator::fit(const MalliavinSlice& slice, const Mat& values,
                                           const Vec& eta) {
    const Eigen::Index d = slice.states.rows();
    const Eigen::Index n = slice.states.cols();
    if (d < 1 || d > 2) throw Error("malliavin_estimate: supports d <= 2 only");
    if (values.rows() != n) throw Error("malliavin_estimate: sample and response counts differ");
    if (slice.brownian.rows() != d || slice.brownian.cols() != n ||
        slice.increments.rows() != d || slice.increments.cols() != n || slice.scale.size() != d ||
        eta.size() != d)
        throw Error("malliavin_estimate: inconsistent slice dimensions");
    if (!(slice.h > 0.0)) throw Error("malliavin_estimate: step must be positive");

    MalliavinEstimator est;
    est.dim_ = static_cast<std::size_t>(d);
    est.responses_ = static_cast<std::size_t>(values.cols());
    est.count_ = static_cast<std::size_t>(n);
    est.eta_ = eta;
    est.values_ = values;
    est.states_ = slice.states;
    est.global_mean_ = values.colwise().mean().transpose();
    if (!(slice.t > 0.0)) {
        est.degenerate_ = true;
        return est;
    }

    est.ref_ = Vec(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        std::vector<double> axis(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) axis[static_cast<std::size_t>(j)] = slice.states(k, j);
        std::nth_element(axis.begin(), axis.begin() + n / 2, axis.end());
        est.ref_[k] = axis[static_cast<std::size_t>(n / 2)];
    }
    est.weight_ = Vec::Ones(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double w = 1.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double pi = (slice.brownian(k, j) / slice.t - slice.increments(k, j) / slice.h) /
                              slice.scale[k];
            w *= (pi + eta[k]) * std::exp(-eta[k] * (slice.states(k, j) - est.ref_[k]));
        }
        est.weight_[j] = w;
    }
    return est;
}

Vec MalliavinEstimator::finish(double log_shift, const Vec& num, double den) const {
    // Natural-scale denominator: den * exp(log_shift) estimates N p(x).
    const double threshold = 1e-12 * static_cast<double>(count_);
    if (!(den > 0.0) || std::log(den) + log_shift < std::log(threshold)) {
        ++unreliable_;
        return global_mean_;
    }
    return num / den;
}

Vec MalliavinEstimator::evaluate(const Vec& x) const {
    if (degenerate_) return global_mean_;
    const auto d = static_cast<Eigen::Index>(dim_);
    Vec num = Vec::Zero(static_cast<Eigen::Index>(responses_));
    double den = 0.0;
    for (Eigen::Index j = 0; j < states_.cols(); ++j) {
        bool inside = true;
        for (Eigen::Index k = 0; k < d; ++k) inside = inside && states_(k, j) >= x[k];
        if (!inside) continue;
        num += weight_[j] * values_.row(j).transpose();
        den += weight_[j];
    }
    return finish(eta_.dot(x - ref_), num, den);
}

Mat MalliavinEstimator::evaluate_batch(const Mat& queries) const {
    const auto m = static_cast<Eigen::Index>(responses_);
    const Eigen::Index nq = queries.cols();
    Mat out(nq, m);
    if (degenerate_) {
        for (Eigen::Index q = 0; q < nq; ++q) out.row(q) = global_mean_.transpose();
        return out;
    }
    const Eigen::Index n = states_.cols();

    // Sweep along axis 0 in decreasing order, inserting samples with
    // G_0 >= q_0 before answering query q.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return states_(0, a) > states_(0, b); });
    std::vector<Eigen::Index> qorder(static_cast<std::size_t>(nq));
    std::iota(qorder.begin(), qorder.end(), Eigen::Index{0});
    std::sort(qorder.begin(), qorder.end(),
              [&](Eigen::Index a, Eigen::Index b) { return queries(0, a) > queries(0, b); });

    if (dim_ == 1) {
        Vec num = Vec::Zero(m);
        double den = 0.0;
        std::size_t next = 0;
        for (auto q : qorder) {
            while (next < order.size() && states_(0, order[next]) >= queries(0, q)) {
                const auto j = order[next++];
                num += weight_[j] * values_.row(j).transpose();
                den += weight_[j];
            }
            out.row(q) = finish(eta_[0] * (queries(0, q) - ref_[0]), num, den).transpose();
        }
        return out;
    }

    // d == 2: Fenwick tree over the descending rank of G_1; prefix sums over
    // ranks give sums over samples with G_1 >= threshold.
    std::vector<double> axis1(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) axis1[static_cast<std::size_t>(j)] = states_(1, j);
    std::vector<double> sorted1 = axis1;
    std::sort(sorted1.begin(), sorted1.end(), std::greater<>());
    auto rank_of = [&](double v) {  // number of samples with G_1 >= v
        return static_cast<std::size_t>(
            std::upper_bound(sorted1.begin(), sorted1.end(), v, std::greater<>()) -
            sorted1.begin());
    };
    const auto cols = m + 1;
    Mat tree = Mat::Zero(n + 1, cols);
    auto add = [&](std::size_t pos, const Eigen::RowVectorXd& v) {
        for (std::size_t i = pos; i <= static_cast<std::size_t>(n); i += i & (~i + 1))
            tree.row(static_cast<Eigen::Index>(i)) += v;
    };
    auto prefix = [&](std::size_t pos) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cols);
        for (std::size_t i = pos; i > 0; i -= i & (~i + 1))
            acc += tree.row(static_cast<Eigen::Index>(i));
        return acc;
    };
    Eigen::RowVectorXd entry(cols);
    std::size_t next = 0;
    for (auto q : qorder) {
        while (next < order.size() && states_(0, order[next]) >= queries(0, q)) {
            const auto j = order[next++];
            // 1-based position among equal values: the first slot of the run
            const std::size_t pos =
                static_cast<std::size_t>(std::lower_bound(sorted1.begin(), sorted1.end(),
                                                          states_(1, j), std::greater<>()) -
                                         sorted1.begin()) + 1;
            entry.head(m) = weight_[j] * values_.row(j);
            entry[m] = weight_[j];
            add(pos, entry);
        }
        const Eigen::RowVectorXd acc = prefix(rank_of(queries(1, q)));
        out.row(q) = finish(eta_.dot(queries.col(q) - ref_), acc.head(m).transpose(), acc[m])
                         .transpose();
    }
    return out;
}

}  // namespace mcfd
