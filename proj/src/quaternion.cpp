#include "cadre/quaternion.hpp"

#include <algorithm>
#include <stdexcept>

namespace cadre {

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
    const double n = cadre::norm(axis);
    if (n <= 0.0) throw std::domain_error("from_axis_angle: zero axis");
    const double h = 0.5 * angle;
    const double s = std::sin(h) / n;
    return {std::cos(h), s * axis[0], s * axis[1], s * axis[2]};
}

Quaternion quat_normalize(const Quaternion& q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::domain_error("quat_normalize: zero or non-finite norm");
    }
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

bool quat_is_unit(const Quaternion& q, double tol) {
    return std::fabs(q.norm() - 1.0) <= tol;
}

double quat_geodesic(const Quaternion& q1, const Quaternion& q2) {
    if (!quat_is_unit(q1) || !quat_is_unit(q2)) {
        throw std::domain_error("quat_geodesic: inputs must be unit quaternions");
    }
    // Chord form of 2*acos(|<q1,q2>|): the straight acos loses half the
    // significand near zero angle (equal inputs read as ~3e-8), which would
    // sink the sub-1e-9 encode/decode round-trip guarantee. The chord to the
    // nearer of +-q2 has length 2*sin(angle/4), and asin is well-conditioned
    // over the whole reachable range (argument <= sqrt(2)/2).
    auto sq = [](double v) { return v * v; };
    const double minus =
        sq(q1.w - q2.w) + sq(q1.x - q2.x) + sq(q1.y - q2.y) + sq(q1.z - q2.z);
    const double plus =
        sq(q1.w + q2.w) + sq(q1.x + q2.x) + sq(q1.y + q2.y) + sq(q1.z + q2.z);
    const double half_chord = 0.5 * std::sqrt(std::min(minus, plus));
    return 4.0 * std::asin(std::min(half_chord, 1.0));
}

Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
    return {
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    };
}

Vec3 quat_apply(const Quaternion& q, const Vec3& p) {
    // v + 2*q_v x (q_v x v + w*v)
    const Vec3 qv{q.x, q.y, q.z};
    const Vec3 t = cross(qv, cross(qv, p) + q.w * p);
    return p + 2.0 * t;
}

std::array<double, 9> quat_to_matrix(const Quaternion& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    return {
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
        2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y),
    };
}

Quaternion quat_canonical_sign(const Quaternion& q) {
    const double c[4] = {q.w, q.x, q.y, q.z};
    for (int i = 0; i < 4; ++i) {
        if (c[i] > 0.0) return q;
        if (c[i] < 0.0) return q.negated();
    }
    return q;
}

} // namespace cadre
