#pragma once

#include "mcfd/types.hpp"

namespace mcfd {

/// Integration-by-parts weights turning E[phi(X_h)] into estimates of the
/// expected gradient and Hessian of phi.
struct WeightTriple {
    double h0 = 1.0;
    Vec h1;
    Mat h2;
};

/// Inverse transpose of the diffusion matrix, computed once per (t, x).
/// Rejects singular or badly conditioned matrices (cond > 1e12).
class InverseDiffusion {
public:
    static constexpr double kMaxCondition = 1e12;

    /// t and x only label the error message.
    InverseDiffusion(const Mat& sigma, double t, const Vec& x);
    explicit InverseDiffusion(const Mat& sigma);

    /// (sigma^T)^{-1}
    const Mat& inv_transpose() const { return inv_t_; }
    Eigen::Index dim() const { return inv_t_.rows(); }

    WeightTriple weights(const Vec& dW, double h) const;
    Vec first_order(const Vec& dW, double h) const;
    Mat second_order(const Vec& dW, double h) const;

private:
    void init(const Mat& sigma, const std::string& where);

    Mat inv_t_;
    bool diagonal_ = false;
};

WeightTriple weights(const Mat& sigma, const Vec& dW, double h);

/// Weight multiplying the previously fitted gradient to form the two-step
/// Hessian estimate: (sigma^T)^{-1} dW / h.
Vec scheme2_hessian_weight(const Mat& sigma, const Vec& dW, double h);

}  // namespace mcfd
