#include "magtv/measure.hpp"

#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace magtv {

namespace {

std::string describe(const Vec3& p) {
    std::ostringstream os;
    os << "(" << p.x() << ", " << p.y() << ", " << p.z() << ")";
    return os.str();
}

}  // namespace

DiscreteVectorMeasure::DiscreteVectorMeasure(std::vector<Atom> atoms) {
    atoms_.reserve(atoms.size());
    for (const Atom& a : atoms) {
        if (!all_finite(a.position) || !all_finite(a.moment)) {
            throw std::invalid_argument("measure atom with non-finite entries at " +
                                        describe(a.position));
        }
        if (a.moment.norm() == 0.0) continue;  // zero-moment atoms are dropped
        atoms_.push_back(a);
    }
    std::map<std::tuple<double, double, double>, int> seen;
    for (const Atom& a : atoms_) {
        const auto key = std::make_tuple(a.position.x(), a.position.y(),
                                         a.position.z());
        if (!seen.emplace(key, 1).second) {
            throw std::invalid_argument("duplicate atom location " +
                                        describe(a.position));
        }
    }
}

DiscreteVectorMeasure DiscreteVectorMeasure::merged(
    const std::vector<Atom>& atoms) {
    std::map<std::tuple<double, double, double>, Vec3> sums;
    std::vector<std::tuple<double, double, double>> order;
    for (const Atom& a : atoms) {
        const auto key = std::make_tuple(a.position.x(), a.position.y(),
                                         a.position.z());
        auto it = sums.find(key);
        if (it == sums.end()) {
            sums.emplace(key, a.moment);
            order.push_back(key);
        } else {
            it->second += a.moment;
        }
    }
    std::vector<Atom> merged;
    merged.reserve(order.size());
    for (const auto& key : order) {
        merged.push_back(Atom{Vec3(std::get<0>(key), std::get<1>(key),
                                   std::get<2>(key)),
                              sums.at(key)});
    }
    return DiscreteVectorMeasure(std::move(merged));
}

void DiscreteVectorMeasure::require_inside(const Box3& region) const {
    for (const Atom& a : atoms_) {
        if (!region.contains(a.position)) {
            throw std::domain_error("atom at " + describe(a.position) +
                                    " lies outside the source region");
        }
    }
}

double tv_norm(const DiscreteVectorMeasure& mu) {
    double s = 0;
    for (const Atom& a : mu.atoms()) s += a.moment.norm();
    return s;
}

std::vector<Vec3> support_points(const DiscreteVectorMeasure& mu) {
    std::vector<Vec3> pts;
    pts.reserve(mu.size());
    for (const Atom& a : mu.atoms()) pts.push_back(a.position);
    return pts;
}

double directed_hausdorff(const std::vector<Vec3>& xs,
                          const std::vector<Vec3>& ys) {
    if (xs.empty()) return 0.0;
    if (ys.empty()) return std::numeric_limits<double>::infinity();
    double worst = 0;
    for (const Vec3& x : xs) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& y : ys) best = std::min(best, (x - y).norm());
        worst = std::max(worst, best);
    }
    return worst;
}

double hausdorff_distance(const std::vector<Vec3>& xs,
                          const std::vector<Vec3>& ys) {
    if (xs.empty() && ys.empty()) return 0.0;
    return std::max(directed_hausdorff(xs, ys), directed_hausdorff(ys, xs));
}

}  // namespace magtv
