#include "planeq/geometry.hpp"

namespace planeq::geo {

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) {
    return PoseSE3(a.q * b.q, a.q.rotate(b.t) + a.t);
}

PoseSE3 se3_inverse(const PoseSE3& a) {
    const Quat qi = a.q.conj();
    return PoseSE3(qi, -qi.rotate(a.t));
}

namespace {

// theta/s and the V-inverse coefficient, with series branches near theta = 0.
// s = |vec(q)| = sin(theta/2), w = cos(theta/2) for a canonical quaternion.
struct LogCoeffs {
    double theta;
    Vec3 axis;      // unit rotation axis (zero vector when theta == 0)
};

LogCoeffs rotation_log(const Quat& q_in) {
    Quat q = q_in;
    if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
    const Vec3 v{q.x, q.y, q.z};
    const double s = v.norm();
    if (s == 0.0) return {0.0, {0, 0, 0}};
    const double theta = 2.0 * std::atan2(s, q.w);
    return {theta, v * (1.0 / s)};
}

}  // namespace

Twist se3_log(const PoseSE3& T) {
    const auto [theta, axis] = rotation_log(T.q);
    const Vec3 phi = axis * theta;

    // rho = V(phi)^-1 t = t - (theta/2) axis x t + D axis x (axis x t),
    // D = 1 - (theta/2) cot(theta/2).
    Vec3 rho = T.t;
    if (theta != 0.0) {
        const double half = 0.5 * theta;
        double d_coeff;
        if (theta < 1e-4) {
            // series: 1 - x cot(x) = x^2/3 + x^4/45 + ...
            d_coeff = half * half / 3.0 + half * half * half * half / 45.0;
        } else {
            d_coeff = 1.0 - half * std::cos(half) / std::sin(half);
        }
        const Vec3 axt = axis.cross(T.t);
        rho = T.t - axt * half + axis.cross(axt) * d_coeff;
    }
    return {rho.x, rho.y, rho.z, phi.x, phi.y, phi.z};
}

PoseSE3 se3_exp(const Twist& g) {
    const Vec3 rho{g[0], g[1], g[2]};
    const Vec3 phi{g[3], g[4], g[5]};
    const double theta = phi.norm();

    Quat q;
    double a_coeff, b_coeff;  // V = I + a phi^ + b phi^^2 with phi^ = skew(phi)
    if (theta < 1e-6) {
        const double t2 = theta * theta;
        q = Quat{1.0 - t2 / 8.0, 0.5 * phi.x, 0.5 * phi.y, 0.5 * phi.z}.normalized();
        a_coeff = 0.5 - t2 / 24.0;
        b_coeff = 1.0 / 6.0 - t2 / 120.0;
    } else {
        const double h = 0.5 * theta;
        const double sh = std::sin(h) / theta;
        q = {std::cos(h), phi.x * sh, phi.y * sh, phi.z * sh};
        a_coeff = (1.0 - std::cos(theta)) / (theta * theta);
        b_coeff = (theta - std::sin(theta)) / (theta * theta * theta);
    }

    const Vec3 pr = phi.cross(rho);
    const Vec3 t = rho + pr * a_coeff + phi.cross(pr) * b_coeff;
    return PoseSE3(q, t);
}

PlaneParam plane_transform(const PlaneParam& plane, const PoseSE3& T_2_from_1) {
    const double d1 = plane.offset();
    const Vec3 n2 = T_2_from_1.q.rotate(plane.unit_normal());
    const double d2 = d1 + n2.dot(T_2_from_1.t);
    if (d2 <= kDegeneratePlaneEps)
        throw DomainError("transformed plane passes through or behind the origin");
    return PlaneParam(n2 * (1.0 / d2));
}

double render_plane_depth(const PlaneParam& plane, const CameraIntrinsics& cam, double u,
                          double v) {
    if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height)
        throw ContractError("pixel outside image bounds");
    const double denom = plane.n.dot(cam.ray(u, v));
    if (denom <= kDegeneratePlaneEps)
        throw DomainError("ray parallel to or facing away from plane");
    return 1.0 / denom;
}

DepthMapResult depth_map_from_planes(const std::vector<int>& segmentation,
                                     const std::vector<PlaneParam>& params,
                                     const CameraIntrinsics& cam) {
    if (static_cast<int>(segmentation.size()) != cam.width * cam.height)
        throw ContractError("segmentation size does not match intrinsics");
    DepthMapResult out;
    out.depth.assign(segmentation.size(), 0.0);
    out.invalid.assign(segmentation.size(), 0);
    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const size_t i = static_cast<size_t>(v) * cam.width + u;
            const int id = segmentation[i];
            if (id < 0) continue;
            if (id >= static_cast<int>(params.size()))
                throw ContractError("segmentation references a missing plane");
            const double denom = params[static_cast<size_t>(id)].n.dot(cam.ray(u + 0.5, v + 0.5));
            if (denom <= kDegeneratePlaneEps) {
                out.invalid[i] = 1;
                ++out.invalid_count;
                continue;
            }
            out.depth[i] = 1.0 / denom;
        }
    }
    return out;
}

FuseResult fuse_planes(const std::vector<PlanePair>& pairs, const PoseSE3& T_2_from_1,
                       const FuseThresholds& th) {
    const PoseSE3 T_1_from_2 = se3_inverse(T_2_from_1);
    FuseResult out;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const PlanePair& p = pairs[i];
        PlaneParam moved;
        try {
            moved = plane_transform(p.view2, T_1_from_2);
        } catch (const DomainError&) {
            out.rejected.push_back({static_cast<int>(i), FuseReject::DegenerateTransform});
            continue;
        }
        const Vec3 n1 = p.view1.unit_normal();
        const Vec3 n2 = moved.unit_normal();
        if (angle_between(n1, n2) > th.max_normal_angle_rad) {
            out.rejected.push_back({static_cast<int>(i), FuseReject::NormalDeviation});
            continue;
        }
        const double d1 = p.view1.offset(), d2 = moved.offset();
        if (std::fabs(d1 - d2) > th.max_offset_gap_m) {
            out.rejected.push_back({static_cast<int>(i), FuseReject::OffsetDeviation});
            continue;
        }
        const Vec3 n_f = (n1 + n2).normalized();
        const double d_f = 0.5 * (d1 + d2);
        out.fused.push_back(
            {PlaneParam::from_normal_offset(n_f, d_f), p.left_index, p.right_index});
    }
    return out;
}

}  // namespace planeq::geo
