#pragma once

#include <array>
#include <cmath>

namespace cadre {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Hamilton convention, components ordered (w, x, y, z). q and -q encode the
// same rotation; geodesic distance treats them identically.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
    static Quaternion from_axis_angle(const Vec3& axis, double angle);

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quaternion conjugate() const { return {w, -x, -y, -z}; }
    Quaternion negated() const { return {-w, -x, -y, -z}; }
};

// Unit quaternion with the same direction; throws std::domain_error on zero norm.
Quaternion quat_normalize(const Quaternion& q);

// Geodesic angle 2*acos(|<q1,q2>|) in [0, pi]. Requires unit inputs.
double quat_geodesic(const Quaternion& q1, const Quaternion& q2);

// Hamilton product q1*q2 (apply q2 first, then q1).
Quaternion quat_multiply(const Quaternion& q1, const Quaternion& q2);

// Rotate point p by unit quaternion q.
Vec3 quat_apply(const Quaternion& q, const Vec3& p);

// 3x3 rotation matrix, row-major.
std::array<double, 9> quat_to_matrix(const Quaternion& q);

// Canonical sign: first nonzero of (w,x,y,z) made positive. Identity rotation
// maps to itself; used to de-alias regression targets from the double cover.
Quaternion quat_canonical_sign(const Quaternion& q);

bool quat_is_unit(const Quaternion& q, double tol = 1e-6);

} // namespace cadre
