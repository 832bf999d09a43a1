#include "gazenet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "gazenet/errors.hpp"

namespace gazenet {

double UnitVec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Rotation Rotation::about_x(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return Rotation{{1, 0, 0, 0, c, -s, 0, s, c}};
}

Rotation Rotation::about_y(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return Rotation{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

Rotation Rotation::from_angles(const Angles& a) {
    // Positive pitch raises the direction, i.e. negative rotation about x
    // for a vector that starts at -z.
    return about_y(a.yaw) * about_x(-a.pitch);
}

Rotation Rotation::operator*(const Rotation& o) const {
    Rotation r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
            r.m[static_cast<std::size_t>(i * 3 + j)] = s;
        }
    return r;
}

UnitVec3 Rotation::apply(const UnitVec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

double Rotation::determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Rotation Rotation::transposed() const {
    return Rotation{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
}

bool is_valid(const Angles& a) {
    return std::isfinite(a.pitch) && std::isfinite(a.yaw) && a.pitch >= -kPi / 2 &&
           a.pitch <= kPi / 2 && a.yaw > -kPi && a.yaw <= kPi;
}

double wrap_yaw(double yaw) {
    double w = std::remainder(yaw, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

UnitVec3 angles_to_vec(const Angles& a) {
    const double cp = std::cos(a.pitch);
    return {-cp * std::sin(a.yaw), -std::sin(a.pitch), -cp * std::cos(a.yaw)};
}

Angles vec_to_angles(const UnitVec3& v) {
    const double n = v.norm();
    if (!(n >= 1.0 - 1e-6 && n <= 1.0 + 1e-6))
        throw InvalidInput("vec_to_angles: input norm " + std::to_string(n) + " is not unit");
    const double y = std::clamp(v.y / n, -1.0, 1.0);
    Angles a{std::asin(-y), std::atan2(-v.x, -v.z)};
    // atan2 can return exactly -pi; the canonical yaw range is (-pi, pi]
    if (a.yaw <= -kPi) a.yaw = kPi;
    return a;
}

double angular_error(const Angles& a, const Angles& b) {
    if (a == b) return 0.0;
    // fixed argument order keeps the result bitwise symmetric
    if (std::tie(b.pitch, b.yaw) < std::tie(a.pitch, a.yaw)) return angular_error(b, a);
    // atan2 form stays accurate for nearly parallel vectors
    const UnitVec3 u = angles_to_vec(a), v = angles_to_vec(b);
    const double cx = u.y * v.z - u.z * v.y, cy = u.z * v.x - u.x * v.z, cz = u.x * v.y - u.y * v.x;
    return rad2deg(std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), u.dot(v)));
}

double cosine_distance(const Angles& a, const Angles& b) {
    return 1.0 - angles_to_vec(a).dot(angles_to_vec(b));
}

Angles compose_gaze(const Rotation& head, const Rotation& eye_in_head) {
    return vec_to_angles((head * eye_in_head).apply(UnitVec3{0.0, 0.0, -1.0}));
}

Angles compose_gaze(const Angles& head, const Angles& eye_in_head) {
    return compose_gaze(Rotation::from_angles(head), Rotation::from_angles(eye_in_head));
}

std::tuple<EyeImage, Angles, Angles> mirror_sample(const EyeImage& img, const Angles& head,
                                                   const Angles& gaze) {
    // -yaw stays in (-pi, pi] except at yaw == pi, which maps to itself
    auto flip = [](const Angles& a) { return Angles{a.pitch, a.yaw == kPi ? kPi : -a.yaw}; };
    return {flip_horizontal(img), flip(head), flip(gaze)};
}

}  // namespace gazenet
