#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "planeq/common.hpp"

namespace planeq::geo {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        if (n == 0.0) throw DomainError("normalize of zero vector");
        return {x / n, y / n, z / n};
    }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
};

// Unit quaternion (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        const Vec3 u = axis.normalized();
        const double h = 0.5 * angle, s = std::sin(h);
        return {std::cos(h), u.x * s, u.y * s, u.z * s};
    }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        const double n = norm();
        if (n == 0.0) throw DomainError("normalize of zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Quat conj() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Vec3 rotate(const Vec3& v) const {
        // q (0,v) q*
        const Vec3 u{x, y, z};
        const Vec3 t = u.cross(v) * 2.0;
        return v + t * w + u.cross(t);
    }

    Mat3 to_mat() const {
        Mat3 r;
        r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
               2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
        return r;
    }

    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
};

// Rigid transform X_out = R(q) X_in + t. The quaternion is kept unit-norm with
// canonical sign w >= 0.
struct PoseSE3 {
    Quat q;
    Vec3 t;

    PoseSE3() = default;
    PoseSE3(const Quat& q_in, const Vec3& t_in) : q(q_in.normalized()), t(t_in) {
        if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
    }

    static PoseSE3 identity() { return {}; }
    Vec3 apply(const Vec3& p) const { return q.rotate(p) + t; }
};

// (a o b) applies b then a.
PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b);
PoseSE3 se3_inverse(const PoseSE3& a);

// Twist ordering: translation part G[0..3) = rho, rotation part G[3..6) = phi.
using Twist = std::array<double, 6>;

Twist se3_log(const PoseSE3& T);
PoseSE3 se3_exp(const Twist& g);

// Plane as n = n_hat / d where n_hat is the unit surface normal and d > 0 the
// camera-to-plane offset in meters. Points on the plane satisfy n . X = 1.
struct PlaneParam {
    Vec3 n;

    PlaneParam() = default;
    explicit PlaneParam(const Vec3& v) : n(v) {
        if (n.norm() == 0.0) throw DomainError("plane parameter must be nonzero");
    }
    static PlaneParam from_normal_offset(const Vec3& n_hat, double d) {
        if (d <= 0.0) throw DomainError("plane offset must be positive");
        return PlaneParam(n_hat.normalized() * (1.0 / d));
    }
    double offset() const { return 1.0 / n.norm(); }
    Vec3 unit_normal() const { return n.normalized(); }
};

struct CameraIntrinsics {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw ContractError("focal lengths must be positive");
        if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
            throw ContractError("principal point outside image");
    }
    // Unit-z ray through pixel center (u, v).
    Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

inline constexpr double kDegeneratePlaneEps = 1e-6;

// Re-express a plane given in frame 1 in frame 2, where T maps frame-1 points
// to frame-2 points. Throws DomainError if the transformed plane passes
// through or behind the frame-2 origin.
PlaneParam plane_transform(const PlaneParam& plane, const PoseSE3& T_2_from_1);

// Depth along the pixel ray; throws DomainError when the ray is parallel to or
// faces away from the plane (n . r <= eps).
double render_plane_depth(const PlaneParam& plane, const CameraIntrinsics& cam, double u,
                          double v);

struct DepthMapResult {
    std::vector<double> depth;   // row-major height x width; 0 for background
    std::vector<char> invalid;   // 1 where a planar pixel had an invalid ray
    int invalid_count = 0;
};

// segmentation: row-major per-pixel plane index, -1 for background.
DepthMapResult depth_map_from_planes(const std::vector<int>& segmentation,
                                     const std::vector<PlaneParam>& params,
                                     const CameraIntrinsics& cam);

struct PlanePair {
    PlaneParam view1;
    PlaneParam view2;
    int left_index = -1;   // caller bookkeeping (e.g. prediction indices)
    int right_index = -1;
};

struct FusedPlane {
    PlaneParam plane;  // expressed in the view-1 frame
    int left_index = -1;
    int right_index = -1;
};

enum class FuseReject { NormalDeviation, OffsetDeviation, DegenerateTransform };

struct RejectedPair {
    int pair_index;
    FuseReject reason;
};

struct FuseResult {
    std::vector<FusedPlane> fused;
    std::vector<RejectedPair> rejected;
};

struct FuseThresholds {
    double max_normal_angle_rad = 30.0 * M_PI / 180.0;
    double max_offset_gap_m = 0.5;
};

// Merge matched plane pairs into single view-1-frame planes: transformed
// view-2 normal averaged with the view-1 normal (renormalized), offsets
// averaged. Pairs whose transformed attributes deviate beyond the thresholds
// are rejected with a reason.
FuseResult fuse_planes(const std::vector<PlanePair>& pairs, const PoseSE3& T_2_from_1,
                       const FuseThresholds& th = {});

inline double angle_between(const Vec3& a, const Vec3& b) {
    const double c = a.normalized().dot(b.normalized());
    return std::acos(std::min(1.0, std::max(-1.0, c)));
}

}  // namespace planeq::geo
