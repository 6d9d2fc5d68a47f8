#include "mcfd/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace mcfd {

Mat ConditionalExpectationEstimator::evaluate_batch(const Mat& queries) const {
    Mat out(queries.cols(), static_cast<Eigen::Index>(responses()));
    for (Eigen::Index q = 0; q < queries.cols(); ++q) out.row(q) = evaluate(Vec(queries.col(q))).transpose();
    return out;
}

double truncate_estimate(double value, double bound) {
    if (!(bound >= 0.0)) throw Error("truncate_estimate: bound must be nonnegative");
    return std::clamp(value, -bound, bound);
}

LocalBasisEstimator LocalBasisEstimator::fit(const Mat& samples, const Mat& values,
                                             const LocalBasisConfig& cfg, const Mat* controls) {
    const auto d = static_cast<std::size_t>(samples.rows());
    const auto n = static_cast<std::size_t>(samples.cols());
    if (cfg.cells_per_axis.size() != d)
        throw Error("fit_local_basis: cells_per_axis must have one entry per dimension");
    if (static_cast<std::size_t>(values.rows()) != n)
        throw Error("fit_local_basis: sample and response counts differ");
    if (values.cols() < 1) throw Error("fit_local_basis: no responses");
    for (auto c : cfg.cells_per_axis)
        if (c < 1) throw Error("fit_local_basis: cell counts must be positive");
    if (controls && static_cast<std::size_t>(controls->rows()) != n)
        throw Error("fit_local_basis: sample and control counts differ");

    LocalBasisEstimator est;
    est.dim_ = d;
    est.responses_ = static_cast<std::size_t>(values.cols());
    est.cfg_ = cfg;
    est.min_samples_ = cfg.min_samples ? cfg.min_samples : d + 2;
    if (n < est.min_samples_)
        throw Error("fit_local_basis: fewer samples than the per-cell minimum");

    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::vector<std::vector<Eigen::Index>> members;
    est.build(samples, idx, 0, n, 0, members);

    est.cells_.resize(members.size());
    est.diagnostics_.resize(members.size());
    for (std::size_t c = 0; c < members.size(); ++c)
        est.fit_cell(samples, values, controls, members[c], est.cells_[c], est.diagnostics_[c]);
    return est;
}

std::size_t LocalBasisEstimator::build(const Mat& samples, std::vector<Eigen::Index>& idx,
                                       std::size_t begin, std::size_t end, std::size_t level,
                                       std::vector<std::vector<Eigen::Index>>& members) {
    const auto axis = static_cast<Eigen::Index>(level);
    const auto first = idx.begin() + static_cast<std::ptrdiff_t>(begin);
    const auto last = idx.begin() + static_cast<std::ptrdiff_t>(end);
    std::stable_sort(first, last, [&](Eigen::Index a, Eigen::Index b) {
        return samples(axis, a) < samples(axis, b);
    });
    auto value = [&](std::size_t pos) { return samples(axis, idx[pos]); };

    const std::size_t n = end - begin;
    std::size_t pieces = std::min(cfg_.cells_per_axis[level], std::max<std::size_t>(1, n / min_samples_));
    std::vector<double> cuts;
    for (std::size_t k = 1; k < pieces; ++k) {
        const double v = value(begin + k * n / pieces);
        if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
    }
    // Piece k holds samples with cuts[k-1] <= v < cuts[k].
    auto boundaries = [&]() {
        std::vector<std::size_t> b{begin};
        for (double c : cuts) {
            std::size_t lo = b.back(), hi = end;
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (value(mid) < c) lo = mid + 1; else hi = mid;
            }
            b.push_back(lo);
        }
        b.push_back(end);
        return b;
    };
    std::vector<std::size_t> bounds = boundaries();
    while (!cuts.empty()) {
        std::size_t smallest = 0;
        for (std::size_t k = 1; k + 1 < bounds.size(); ++k)
            if (bounds[k + 1] - bounds[k] < bounds[smallest + 1] - bounds[smallest]) smallest = k;
        if (bounds[smallest + 1] - bounds[smallest] >= min_samples_) break;
        // merge with the smaller neighbour by dropping the separating cut
        std::size_t drop;
        if (smallest == 0) {
            drop = 0;
        } else if (smallest + 1 == bounds.size() - 1) {
            drop = smallest - 1;
        } else {
            const std::size_t left = bounds[smallest] - bounds[smallest - 1];
            const std::size_t right = bounds[smallest + 2] - bounds[smallest + 1];
            drop = left <= right ? smallest - 1 : smallest;
        }
        cuts.erase(cuts.begin() + static_cast<std::ptrdiff_t>(drop));
        bounds = boundaries();
    }

    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{axis, cuts, {}, level + 1 == dim_});
    std::vector<std::size_t> children;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        if (level + 1 == dim_) {
            children.push_back(members.size());
            members.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(bounds[k]),
                                 idx.begin() + static_cast<std::ptrdiff_t>(bounds[k + 1]));
        } else {
            children.push_back(build(samples, idx, bounds[k], bounds[k + 1], level + 1, members));
        }
    }
    nodes_[id].children = std::move(children);
    return id;
}

void LocalBasisEstimator::fit_cell(const Mat& samples, const Mat& values, const Mat* controls,
                                   const std::vector<Eigen::Index>& members, Cell& cell,
                                   CellDiagnostics& diag) const {
    const auto d = static_cast<Eigen::Index>(dim_);
    const Eigen::Index k = controls ? controls->cols() : 0;
    const auto m = static_cast<Eigen::Index>(responses_);
    const auto n = static_cast<Eigen::Index>(members.size());
    diag.count = members.size();

    cell.center = Vec::Zero(d);
    cell.lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
    cell.hi = Vec::Constant(d, -std::numeric_limits<double>::infinity());
    Vec mean_y = Vec::Zero(m);
    for (auto j : members) {
        cell.center += samples.col(j);
        cell.lo = cell.lo.cwiseMin(samples.col(j));
        cell.hi = cell.hi.cwiseMax(samples.col(j));
        mean_y += values.row(j).transpose();
    }
    cell.center /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    Vec spread = Vec::Zero(d);
    for (auto j : members) spread += (samples.col(j) - cell.center).cwiseAbs2();
    spread = (spread / static_cast<double>(n)).cwiseSqrt();
    bool degenerate = n < static_cast<Eigen::Index>(dim_ + 2) + k;
    cell.inv_scale = Vec::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        if (spread[k] > 1e-300 && spread[k] > 1e-12 * (1.0 + std::abs(cell.center[k]))) {
            cell.inv_scale[k] = 1.0 / spread[k];
        } else {
            degenerate = true;
        }
    }

    cell.coef = Mat::Zero(d + 1, m);
    Mat control_coef = Mat::Zero(k, m);
    if (!degenerate) {
        Mat gram = Mat::Zero(d + 1 + k, d + 1 + k);
        Mat rhs = Mat::Zero(d + 1 + k, m);
        Vec row(d + 1 + k);
        row[0] = 1.0;
        for (auto j : members) {
            row.segment(1, d) = (samples.col(j) - cell.center).cwiseProduct(cell.inv_scale);
            if (k > 0) row.tail(k) = controls->row(j).transpose();
            gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
            rhs.noalias() += row * values.row(j);
        }
        gram = gram.selfadjointView<Eigen::Lower>();
        Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        diag.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (diag.condition < 1e10) {
            const Mat coef = gram.ldlt().solve(rhs);
            cell.coef = coef.topRows(d + 1);
            control_coef = coef.bottomRows(k);
        } else {
            degenerate = true;
        }
    }
    if (degenerate) {
        diag.mean_fallback = true;
        cell.coef.setZero();
        cell.coef.row(0) = mean_y.transpose();
    }

    double sq = 0.0;
    for (auto j : members) {
        const Vec u = (samples.col(j) - cell.center).cwiseProduct(cell.inv_scale);
        double fitted = cell.coef(0, 0) + u.dot(cell.coef.col(0).tail(d));
        if (k > 0) fitted += controls->row(j).dot(control_coef.col(0));
        sq += (values(j, 0) - fitted) * (values(j, 0) - fitted);
    }
    diag.residual_norm = std::sqrt(sq / static_cast<double>(n));
}

std::size_t LocalBasisEstimator::cell_of(const Vec& x) const {
    std::size_t node = 0;
    for (;;) {
        const Node& nd = nodes_[node];
        const auto it = std::upper_bound(nd.cuts.begin(), nd.cuts.end(), x[nd.axis]);
        const auto piece = static_cast<std::size_t>(it - nd.cuts.begin());
        if (nd.leaf_children) return nd.children[piece];
        node = nd.children[piece];
    }
}

Vec LocalBasisEstimator::evaluate(const Vec& x) const {
    const Cell& cell = cells_[cell_of(x)];
    const auto d = static_cast<Eigen::Index>(dim_);
    const Vec u = (x.cwiseMax(cell.lo).cwiseMin(cell.hi) - cell.center).cwiseProduct(cell.inv_scale);
    return cell.coef.row(0).transpose() + cell.coef.bottomRows(d).transpose() * u;
}

Mat LocalBasisEstimator::evaluate_batch(const Mat& queries) const {
    Mat out(queries.cols(), static_cast<Eigen::Index>(responses_));
    const auto d = static_cast<Eigen::Index>(dim_);
    Vec u(d);
    for (Eigen::Index q = 0; q < queries.cols(); ++q) {
        const Cell& cell = cells_[cell_of(queries.col(q))];
        u = (queries.col(q).cwiseMax(cell.lo).cwiseMin(cell.hi) - cell.center)
                .cwiseProduct(cell.inv_scale);
        out.row(q) = cell.coef.row(0) + u.transpose() * cell.coef.bottomRows(d);
    }
    return out;
}

std::size_t LocalBasisEstimator::fallback_cells() const {
    return static_cast<std::size_t>(std::count_if(diagnostics_.begin(), diagnostics_.end(),
                                                  [](const auto& c) { return c.mean_fallback; }));
}

void LocalBasisEstimator::write_diagnostics_csv(std::ostream& os) const {
    os << "cell,count,condition,residual_rms,mean_fallback\n";
    for (std::size_t c = 0; c < diagnostics_.size(); ++c) {
        const auto& dg = diagnostics_[c];
        os << c << ',' << dg.count << ',' << dg.condition << ',' << dg.residual_norm << ','
           << (dg.mean_fallback ? 1 : 0) << '\n';
    }
}

LocalBasisEstimator fit_local_basis(const Mat& samples, const Vec& values,
                                    const LocalBasisConfig& cfg) {
    return LocalBasisEstimator::fit(samples, Mat(values), cfg);
}

}  // namespace mcfd
