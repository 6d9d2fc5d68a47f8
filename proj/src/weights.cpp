#include "mcfd/weights.hpp"

#include <cmath>
#include <sstream>

namespace mcfd {

InverseDiffusion::InverseDiffusion(const Mat& sigma, double t, const Vec& x) {
    std::ostringstream where;
    where << " at t=" << t << ", x=" << format_point(x);
    init(sigma, where.str());
}

InverseDiffusion::InverseDiffusion(const Mat& sigma) { init(sigma, ""); }

void InverseDiffusion::init(const Mat& sigma, const std::string& where) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
        throw Error("diffusion matrix must be square and nonempty" + where);

    const Mat off = sigma - Mat(sigma.diagonal().asDiagonal());
    diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
    if (diagonal_) {
        const Vec diag = sigma.diagonal().cwiseAbs();
        const double lo = diag.minCoeff();
        const double hi = diag.maxCoeff();
        if (!(lo > 0.0) || hi / lo > kMaxCondition || !std::isfinite(hi))
            throw Error("singular diffusion matrix" + where);
        inv_t_ = Mat(sigma.diagonal().cwiseInverse().asDiagonal());
        return;
    }
    Eigen::JacobiSVD<Mat> svd(sigma);
    const Vec& sv = svd.singularValues();
    const double hi = sv[0];
    const double lo = sv[sv.size() - 1];
    if (!(lo > 0.0) || hi / lo > kMaxCondition || !std::isfinite(hi))
        throw Error("singular diffusion matrix" + where);
    inv_t_ = sigma.transpose().partialPivLu().inverse();
}

Vec InverseDiffusion::first_order(const Vec& dW, double h) const {
    if (diagonal_) return inv_t_.diagonal().cwiseProduct(dW) / h;
    return inv_t_ * dW / h;
}

Mat InverseDiffusion::second_order(const Vec& dW, double h) const {
    Mat core = dW * dW.transpose();
    core.diagonal().array() -= h;
    core /= h * h;
    if (diagonal_) {
        const Vec s = inv_t_.diagonal();
        return s.asDiagonal() * core * s.asDiagonal();
    }
    // (sigma^T)^{-1} core sigma^{-1}; sigma^{-1} = ((sigma^T)^{-1})^T
    return inv_t_ * core * inv_t_.transpose();
}

WeightTriple InverseDiffusion::weights(const Vec& dW, double h) const {
    return WeightTriple{1.0, first_order(dW, h), second_order(dW, h)};
}

WeightTriple weights(const Mat& sigma, const Vec& dW, double h) {
    if (!(h > 0.0)) throw Error("weights: step must be positive");
    return InverseDiffusion(sigma).weights(dW, h);
}

Vec scheme2_hessian_weight(const Mat& sigma, const Vec& dW, double h) {
    if (!(h > 0.0)) throw Error("scheme2_hessian_weight: step must be positive");
    return InverseDiffusion(sigma).first_order(dW, h);
}

}  // namespace mcfd
