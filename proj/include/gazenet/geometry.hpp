#pragma once

#include <array>
#include <numbers>
#include <tuple>

#include "gazenet/image.hpp"

namespace gazenet {

/// Pitch/yaw pair in radians, used for both head pose and gaze.
///
/// Positive pitch looks up; positive yaw turns toward the subject's left as
/// seen from the camera, which is image-left in a normalized eye crop. All
/// angles are assumed to already live in the normalized camera frame.
struct Angles {
    double pitch = 0.0;
    double yaw = 0.0;

    friend bool operator==(const Angles&, const Angles&) = default;
};

struct UnitVec3 {
    double x = 0.0;
    double y = 0.0;
    double z = -1.0;

    double dot(const UnitVec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const;
};

/// 3x3 row-major rotation matrix.
struct Rotation {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Rotation identity() { return {}; }
    /// Right-handed rotation about the x axis.
    static Rotation about_x(double radians);
    /// Right-handed rotation about the y axis.
    static Rotation about_y(double radians);
    /// Rotation that carries the camera-facing direction (0,0,-1) onto
    /// angles_to_vec(a): pitch is applied first, then yaw.
    static Rotation from_angles(const Angles& a);

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
    Rotation operator*(const Rotation& o) const;
    UnitVec3 apply(const UnitVec3& v) const;
    double determinant() const;
    Rotation transposed() const;
};

constexpr double kPi = std::numbers::pi;

constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Checks pitch in [-pi/2, pi/2] and yaw in (-pi, pi].
bool is_valid(const Angles& a);

/// Maps any yaw onto (-pi, pi].
double wrap_yaw(double yaw);

/// v = (-cos(p) sin(y), -sin(p), -cos(p) cos(y)); (0,0) points into the camera.
UnitVec3 angles_to_vec(const Angles& a);

/// Inverse of angles_to_vec. Throws InvalidInput if |v| is not 1 within 1e-6.
Angles vec_to_angles(const UnitVec3& v);

/// Angle between the two directions, in degrees, in [0, 180].
double angular_error(const Angles& a, const Angles& b);

/// 1 - cos(angle between directions), in [0, 2].
double cosine_distance(const Angles& a, const Angles& b);

/// Gaze of an eye rotated by eye_in_head inside a head posed at head.
Angles compose_gaze(const Rotation& head, const Rotation& eye_in_head);
Angles compose_gaze(const Angles& head, const Angles& eye_in_head);

/// Mirrors a right-eye sample into left-eye form: columns reversed, yaw
/// signs of head and gaze negated. Applying it twice is the identity.
std::tuple<EyeImage, Angles, Angles> mirror_sample(const EyeImage& img, const Angles& head,
                                                   const Angles& gaze);

}  // namespace gazenet
