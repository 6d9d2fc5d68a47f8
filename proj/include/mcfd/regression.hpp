#pragma once

#include "mcfd/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <vector>

namespace mcfd {

/// Fitted map x -> E^[Y | X = x] for one or more responses. Samples are
/// stored column-wise (d x N); responses row-wise (N x m).
class ConditionalExpectationEstimator {
public:
    virtual ~ConditionalExpectationEstimator() = default;

    virtual std::size_t dim() const = 0;
    virtual std::size_t responses() const = 0;
    /// All responses at one point.
    virtual Vec evaluate(const Vec& x) const = 0;
    /// Query points column-wise (d x Q); result Q x m.
    virtual Mat evaluate_batch(const Mat& queries) const;

    double evaluate(const Vec& x, std::size_t response) const {
        return evaluate(x)[static_cast<Eigen::Index>(response)];
    }
};

using EstimatorPtr = std::shared_ptr<const ConditionalExpectationEstimator>;

// --- adaptive local affine basis ------------------------------------------------

struct LocalBasisConfig {
    /// Pieces per axis; the partition splits axis 0 into equal-count slabs,
    /// then each slab along axis 1, and so on.
    std::vector<std::size_t> cells_per_axis;
    /// Minimum samples per cell; 0 means d + 2.
    std::size_t min_samples = 0;
};

struct CellDiagnostics {
    std::size_t count = 0;
    double condition = 1.0;
    double residual_norm = 0.0;  // RMS residual of the first response
    bool mean_fallback = false;
};

class LocalBasisEstimator final : public ConditionalExpectationEstimator {
public:
    /// samples: d x N, values: N x m. controls (N x k, optional) are extra
    /// regressors with known zero conditional mean: they enter each cell's
    /// least squares and are dropped at evaluation.
    static LocalBasisEstimator fit(const Mat& samples, const Mat& values,
                                   const LocalBasisConfig& cfg, const Mat* controls = nullptr);

    std::size_t dim() const override { return dim_; }
    std::size_t responses() const override { return responses_; }
    using ConditionalExpectationEstimator::evaluate;
    Vec evaluate(const Vec& x) const override;
    Mat evaluate_batch(const Mat& queries) const override;

    std::size_t cells() const { return cells_.size(); }
    std::size_t cell_of(const Vec& x) const;
    const std::vector<CellDiagnostics>& diagnostics() const { return diagnostics_; }
    std::size_t fallback_cells() const;

    /// Columns: cell,count,condition,residual_rms,mean_fallback.
    void write_diagnostics_csv(std::ostream& os) const;

private:
    struct Node {
        Eigen::Index axis = 0;
        std::vector<double> cuts;           // strictly increasing
        std::vector<std::size_t> children;  // node ids, or cell ids at the last level
        bool leaf_children = false;
    };
    struct Cell {
        Vec center;
        Vec inv_scale;
        Vec lo;
        Vec hi;
        Mat coef;  // (d + 1) x m
    };

    std::size_t build(const Mat& samples, std::vector<Eigen::Index>& idx, std::size_t begin,
                      std::size_t end, std::size_t level,
                      std::vector<std::vector<Eigen::Index>>& members);
    void fit_cell(const Mat& samples, const Mat& values, const Mat* controls,
                  const std::vector<Eigen::Index>& members, Cell& cell, CellDiagnostics& diag) const;

    std::size_t dim_ = 0;
    std::size_t responses_ = 0;
    LocalBasisConfig cfg_;
    std::size_t min_samples_ = 0;
    std::vector<Node> nodes_;
    std::vector<Cell> cells_;
    std::vector<CellDiagnostics> diagnostics_;
};

/// Single-response convenience wrapper.
LocalBasisEstimator fit_local_basis(const Mat& samples, const Vec& values,
                                    const LocalBasisConfig& cfg);

// --- Malliavin integration-by-parts estimator --------------------------------------

/// Inputs for the ratio estimator on one time slice, assuming each axis k of
/// the state is G_k = a_k + s_k W^k_{t}: the state at time t, the Brownian
/// path value W_t, the next increment W_{t+h} - W_t and the per-axis scale s.
struct MalliavinSlice {
    Mat states;      // d x N, at time t
    Mat brownian;    // d x N, W_t
    Mat increments;  // d x N, W_{t+h} - W_t
    Vec scale;       // s_k
    double t = 0.0;
    double h = 0.0;
};

/// E^[Y | G = x] = sum_j Y_j A_j(x) / sum_j A_j(x) with
/// A_j(x) = prod_k 1{G_jk >= x_k} exp(-eta_k (G_jk - x_k)) (pi_jk + eta_k) and
/// pi_jk = (W_jk / t - dW_jk / h) / s_k. Supports d <= 2.
class MalliavinEstimator final : public ConditionalExpectationEstimator {
public:
    static MalliavinEstimator fit(const MalliavinSlice& slice, const Mat& values,
                                  const Vec& eta);

    /// 5 / sqrt(h) on every axis.
    static Vec default_eta(std::size_t dim, double h);

    std::size_t dim() const override { return dim_; }
    std::size_t responses() const override { return responses_; }
    using ConditionalExpectationEstimator::evaluate;
    Vec evaluate(const Vec& x) const override;
    Mat evaluate_batch(const Mat& queries) const override;

    /// Query points whose denominator fell below 1e-12 N during the last
    /// evaluation calls.
    std::size_t unreliable_queries() const { return unreliable_; }

private:
    Vec finish(double log_shift, const Vec& num, double den) const;

    std::size_t dim_ = 0;
    std::size_t responses_ = 0;
    std::size_t count_ = 0;
    Vec eta_;
    Mat states_;        // d x N
    Vec weight_;        // prod_k (pi_k + eta_k) exp(-eta_k (G_k - ref_k))
    Mat values_;        // N x m
    Vec ref_;           // per-axis reference for the exponential shift
    Vec global_mean_;   // fallback
    bool degenerate_ = false;  // t == 0: every query returns the sample mean
    mutable std::size_t unreliable_ = 0;
};

/// (-K) v value ^ K.
double truncate_estimate(double value, double bound);

}  // namespace mcfd
