#include "magtv/test_functions.hpp"

#include <cmath>
#include <stdexcept>

namespace magtv {

TestFunctionFamily::TestFunctionFamily(Box3 box, int size) : box_(box) {
    if (size <= 0) throw std::invalid_argument("test family size must be positive");
    terms_.reserve(size);
    // Multi-degrees by total degree, lexicographic within a degree; each
    // degree contributes one term per coordinate direction.
    for (int total = 0; static_cast<int>(terms_.size()) < size; ++total) {
        for (int jx = total; jx >= 0; --jx) {
            for (int jy = total - jx; jy >= 0; --jy) {
                const int jz = total - jx - jy;
                for (int c = 0; c < 3; ++c) {
                    if (static_cast<int>(terms_.size()) >= size) return;
                    terms_.push_back(Term{c, {jx, jy, jz}});
                }
            }
        }
    }
}

Vec3 TestFunctionFamily::evaluate(int n, const Vec3& p) const {
    const Term& t = terms_.at(n);
    const Vec3 len = box_.extent();
    double prod = 1.0;
    for (int a = 0; a < 3; ++a) {
        if (t.degree[a] == 0) continue;
        const double s = (p[a] - box_.lo[a]) / len[a];
        prod *= std::cos(M_PI * t.degree[a] * s);
    }
    Vec3 v = Vec3::Zero();
    v[t.component] = prod;
    return v;
}

double TestFunctionFamily::pairing(int n,
                                   const DiscreteVectorMeasure& mu) const {
    double s = 0;
    for (const Atom& a : mu.atoms()) s += evaluate(n, a.position).dot(a.moment);
    return s;
}

RDistance r_distance_breakdown(const DiscreteVectorMeasure& mu,
                               const DiscreteVectorMeasure& nu,
                               const TestFunctionFamily& phi) {
    if (phi.size() == 0) throw std::invalid_argument("empty test family");
    RDistance out;
    double weight = 0.5;  // 2^-n with n starting at 1
    for (int n = 0; n < phi.size(); ++n, weight *= 0.5) {
        const double p = phi.pairing(n, mu) - phi.pairing(n, nu);
        out.metric_term += weight * std::abs(p) / (1.0 + std::abs(p));
    }
    out.tv_term = std::abs(tv_norm(mu) - tv_norm(nu));
    // Each dropped term is at most 2^-n * min(1, |<Phi_n, mu - nu>|) with
    // |<Phi_n, mu - nu>| <= combined TV mass.
    const double tv_sum = tv_norm(mu) + tv_norm(nu);
    out.truncation_bound = std::ldexp(std::min(1.0, tv_sum), -phi.size());
    out.value = out.metric_term + out.tv_term;
    return out;
}

double r_distance_proxy(const DiscreteVectorMeasure& mu,
                        const DiscreteVectorMeasure& nu,
                        const TestFunctionFamily& phi) {
    return r_distance_breakdown(mu, nu, phi).value;
}

}  // namespace magtv
