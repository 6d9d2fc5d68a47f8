#include "mcfd/frontprop.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

namespace mcfd {

FrontResult extract_zero_level(const ValueGradientFn& value, const std::vector<Vec>& seeds,
                               const FrontOptions& opts) {
    if (!(opts.tol > 0.0) || !(opts.step > 0.0)) throw Error("extract_zero_level: tol and step must be positive");
    FrontResult out;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        Vec a = seeds[s];
        auto [va, grad] = value(a);
        std::size_t evals = 1;
        bool done = false;
        if (va == 0.0) {
            out.points.push_back(a);
            out.seed_of_point.push_back(s);
            continue;
        }
        while (evals < opts.max_iterations && !done) {
            const double norm = grad.norm();
            if (!(norm > 0.0) || !std::isfinite(norm)) break;
            const Vec dir = (va > 0.0 ? -1.0 : 1.0) * grad / norm;
            Vec b = a + opts.step * dir;
            auto [vb, gb] = value(b);
            ++evals;
            if ((vb > 0.0) == (va > 0.0) && vb != 0.0) {
                a = b;
                va = vb;
                grad = gb;
                continue;
            }
            // bracket [a, b]: halve until shorter than tol
            while ((b - a).norm() >= opts.tol && evals < opts.max_iterations) {
                const Vec mid = 0.5 * (a + b);
                const double vm = value(mid).first;
                ++evals;
                if ((vm > 0.0) == (va > 0.0)) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            if ((b - a).norm() < opts.tol) {
                out.points.push_back(0.5 * (a + b));
                out.seed_of_point.push_back(s);
                done = true;
            }
            break;
        }
        if (!done) out.unresolved.push_back(s);
    }
    return out;
}

ValueGradientFn with_fd_gradient(std::function<double(const Vec&)> value, double step) {
    return [value = std::move(value), step](const Vec& x) {
        Vec grad(x.size());
        Vec y = x;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            y[k] = x[k] + step;
            const double up = value(y);
            y[k] = x[k] - step;
            const double down = value(y);
            y[k] = x[k];
            grad[k] = (up - down) / (2.0 * step);
        }
        return std::make_pair(value(x), grad);
    };
}

std::vector<Vec> ray_seeds(const Vec& center, double radius, std::size_t count) {
    std::vector<Vec> seeds;
    const auto d = center.size();
    if (d < 1 || d > 3) throw Error("ray_seeds: 1 <= d <= 3");
    if (d == 1) {
        for (std::size_t k = 0; k < count; ++k) {
            Vec p = center;
            p[0] += (k % 2 == 0 ? radius : -radius);
            seeds.push_back(p);
        }
        return seeds;
    }
    const double pi = std::numbers::pi;
    for (std::size_t k = 0; k < count; ++k) {
        Vec dir(d);
        if (d == 2) {
            const double a = 2.0 * pi * static_cast<double>(k) / static_cast<double>(count);
            dir << std::cos(a), std::sin(a);
        } else {
            const double golden = pi * (3.0 - std::sqrt(5.0));
            const double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(count);
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double a = golden * static_cast<double>(k);
            dir << r * std::cos(a), r * std::sin(a), z;
        }
        seeds.push_back(center + radius * dir);
    }
    return seeds;
}

double TwoDisksProfile::operator()(const Vec& p) const {
    if (p.size() != 2) throw Error("two_disks_initial: expects points in the plane");
    const double left = radius - std::hypot(p[0] + center, p[1]);
    const double right = radius - std::hypot(p[0] - center, p[1]);
    const double stripe = std::min(half_width - std::abs(p[1]), half_length - std::abs(p[0]));
    return std::max({left, right, stripe});
}

Vec TwoDisksProfile::gradient(const Vec& p) const {
    const double left = radius - std::hypot(p[0] + center, p[1]);
    const double right = radius - std::hypot(p[0] - center, p[1]);
    const double sy = half_width - std::abs(p[1]);
    const double sx = half_length - std::abs(p[0]);
    const double stripe = std::min(sy, sx);
    Vec g = Vec::Zero(2);
    auto disk = [&](double cx) {
        const double r = std::hypot(p[0] - cx, p[1]);
        if (r > 0.0) {
            g[0] = -(p[0] - cx) / r;
            g[1] = -p[1] / r;
        }
    };
    if (left >= right && left >= stripe) {
        disk(-center);
    } else if (right >= stripe) {
        disk(center);
    } else if (sy <= sx) {
        g[1] = p[1] >= 0.0 ? -1.0 : 1.0;  // one-sided at the axis
    } else {
        g[0] = p[0] >= 0.0 ? -1.0 : 1.0;
    }
    return g;
}

TwoDisksProfile two_disks_initial(double center, double radius, double half_width,
                                  double half_length) {
    if (!(radius > 0.0) || !(half_width > 0.0) || !(half_length > 0.0))
        throw Error("two_disks_initial: sizes must be positive");
    return TwoDisksProfile{center, radius, half_width, half_length};
}

void write_front_csv(std::ostream& os, double t, const FrontResult& front) {
    const Eigen::Index d = front.points.empty() ? 0 : front.points.front().size();
    os << "t";
    for (Eigen::Index k = 0; k < d; ++k) os << ",x" << k;
    os << '\n';
    for (const Vec& p : front.points) {
        os << t;
        for (Eigen::Index k = 0; k < d; ++k) os << ',' << p[k];
        os << '\n';
    }
}

}  // namespace mcfd
