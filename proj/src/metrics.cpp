#include "planeq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "planeq/matching.hpp"

namespace planeq::metrics {

double median(std::vector<double> xs) {
    if (xs.empty()) throw ContractError("median of empty list");
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

SegMetrics seg_metrics(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.empty() || pred.size() != gt.size())
        throw ContractError("seg_metrics needs equal non-empty label maps");
    const double n = static_cast<double>(pred.size());

    std::map<int, double> cp, cg;
    std::map<std::pair<int, int>, double> cj;
    for (size_t i = 0; i < pred.size(); ++i) {
        cp[pred[i]] += 1.0;
        cg[gt[i]] += 1.0;
        cj[{pred[i], gt[i]}] += 1.0;
    }

    // VI = H(P) + H(G) - 2 I(P;G), natural log
    double hp = 0.0, hg = 0.0, mi = 0.0;
    for (auto& [k, c] : cp) hp -= (c / n) * std::log(c / n);
    for (auto& [k, c] : cg) hg -= (c / n) * std::log(c / n);
    for (auto& [pg, c] : cj) {
        const double pj = c / n;
        mi += pj * std::log(pj / ((cp[pg.first] / n) * (cg[pg.second] / n)));
    }
    SegMetrics out;
    out.vi = std::max(0.0, hp + hg - 2.0 * mi);

    // RI from the contingency sums: pairs together in both + apart in both.
    double sum_j2 = 0.0, sum_p2 = 0.0, sum_g2 = 0.0;
    for (auto& [pg, c] : cj) sum_j2 += c * c;
    for (auto& [k, c] : cp) sum_p2 += c * c;
    for (auto& [k, c] : cg) sum_g2 += c * c;
    const double pairs = n * (n - 1.0) / 2.0;
    const double together = (sum_j2 - n) / 2.0;
    const double apart = (n * n - sum_p2 - sum_g2 + sum_j2) / 2.0;
    out.ri = pairs > 0.0 ? (together + apart) / pairs : 1.0;

    // SC: sum over gt segments of |g|/n * max_p IoU(g, p)
    double sc = 0.0;
    for (auto& [glabel, gc] : cg) {
        double best = 0.0;
        for (auto& [plabel, pc] : cp) {
            auto it = cj.find({plabel, glabel});
            if (it == cj.end()) continue;
            const double inter = it->second;
            best = std::max(best, inter / (gc + pc - inter));
        }
        sc += (gc / n) * best;
    }
    out.sc = sc;
    return out;
}

double mask_iou(const std::vector<double>& a, const std::vector<double>& b) {
    check(a.size() == b.size(), "iou mask size mismatch");
    double inter = 0.0, uni = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool pa = a[i] > 0.5, pb = b[i] > 0.5;
        inter += pa && pb ? 1.0 : 0.0;
        uni += pa || pb ? 1.0 : 0.0;
    }
    return uni == 0.0 ? 0.0 : inter / uni;
}

namespace {

double plane_normal_angle_deg(const geo::Vec3& a, const geo::Vec3& b) {
    return geo::angle_between(a, b) * 180.0 / M_PI;
}

// Mean |rendered pred depth - gt depth| over the gt mask; infinity when the
// prediction cannot be rendered somewhere on the mask.
double masked_plane_depth_error(const geo::Vec3& pred_param, const std::vector<double>& gt_mask,
                                const std::vector<double>& gt_depth,
                                const geo::CameraIntrinsics& cam) {
    if (pred_param.norm() == 0.0) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    int cnt = 0;
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            const size_t i = static_cast<size_t>(v) * cam.width + u;
            if (gt_mask[i] <= 0.5) continue;
            const double denom = pred_param.dot(cam.ray(u + 0.5, v + 0.5));
            if (denom <= geo::kDegeneratePlaneEps) return std::numeric_limits<double>::infinity();
            s += std::fabs(1.0 / denom - gt_depth[i]);
            ++cnt;
        }
    return cnt == 0 ? std::numeric_limits<double>::infinity() : s / cnt;
}

}  // namespace

void RecallCurve::merge(const RecallCurve& o) {
    if (thresholds.empty()) {
        *this = o;
        return;
    }
    for (size_t i = 0; i < recalled_planes.size(); ++i) {
        recalled_planes[i] += o.recalled_planes[i];
        recalled_pixels[i] += o.recalled_pixels[i];
    }
    n_planes += o.n_planes;
    n_pixels += o.n_pixels;
    refresh_percentages();
}

void RecallCurve::refresh_percentages() {
    per_plane.assign(thresholds.size(), 0.0);
    per_pixel.assign(thresholds.size(), 0.0);
    for (size_t i = 0; i < thresholds.size(); ++i) {
        if (n_planes > 0) per_plane[i] = 100.0 * recalled_planes[i] / n_planes;
        if (n_pixels > 0) per_pixel[i] = 100.0 * recalled_pixels[i] / n_pixels;
    }
}

RecallCurves plane_recalls(const std::vector<EvalPlane>& preds, const std::vector<EvalPlane>& gts,
                           const std::vector<double>& gt_depth,
                           const geo::CameraIntrinsics& cam) {
    RecallCurves out;
    for (int i = 1; i <= 12; ++i) {
        out.depth.thresholds.push_back(0.05 * i);
        out.normal.thresholds.push_back(2.5 * i);
    }
    for (RecallCurve* c : {&out.depth, &out.normal}) {
        c->recalled_planes.assign(12, 0.0);
        c->recalled_pixels.assign(12, 0.0);
        c->n_planes = static_cast<double>(gts.size());
    }
    for (const auto& g : gts)
        for (double m : g.mask) {
            out.depth.n_pixels += m > 0.5 ? 1.0 : 0.0;
            out.normal.n_pixels += m > 0.5 ? 1.0 : 0.0;
        }

    for (const auto& g : gts) {
        double best_depth_err = std::numeric_limits<double>::infinity();
        double best_normal_err = std::numeric_limits<double>::infinity();
        double gpx = 0.0;
        for (double m : g.mask) gpx += m > 0.5 ? 1.0 : 0.0;
        for (const auto& p : preds) {
            if (mask_iou(p.mask, g.mask) < 0.5) continue;
            if (p.param.norm() == 0.0) continue;
            best_depth_err = std::min(best_depth_err,
                                      masked_plane_depth_error(p.param, g.mask, gt_depth, cam));
            best_normal_err = std::min(best_normal_err,
                                       plane_normal_angle_deg(p.param, g.param));
        }
        for (int i = 0; i < 12; ++i) {
            if (best_depth_err <= out.depth.thresholds[static_cast<size_t>(i)] + 1e-12) {
                out.depth.recalled_planes[static_cast<size_t>(i)] += 1.0;
                out.depth.recalled_pixels[static_cast<size_t>(i)] += gpx;
            }
            if (best_normal_err <= out.normal.thresholds[static_cast<size_t>(i)] + 1e-12) {
                out.normal.recalled_planes[static_cast<size_t>(i)] += 1.0;
                out.normal.recalled_pixels[static_cast<size_t>(i)] += gpx;
            }
        }
    }
    out.depth.refresh_percentages();
    out.normal.refresh_percentages();
    return out;
}

ParamErrors param_errors(const std::vector<geo::Vec3>& preds, const std::vector<geo::Vec3>& gts) {
    if (preds.empty() || gts.empty()) throw ContractError("param_errors needs non-empty sets");
    const int k = static_cast<int>(preds.size());
    const int m = static_cast<int>(gts.size());
    const int n = std::max(k, m);
    Tensor cost({n, n});  // pad with zero-cost dummies
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < m; ++j)
            cost.at2(i, j) = std::fabs(preds[static_cast<size_t>(i)].x - gts[static_cast<size_t>(j)].x) +
                             std::fabs(preds[static_cast<size_t>(i)].y - gts[static_cast<size_t>(j)].y) +
                             std::fabs(preds[static_cast<size_t>(i)].z - gts[static_cast<size_t>(j)].z);
    const auto h = match::hungarian(cost);

    ParamErrors out;
    for (int i = 0; i < k; ++i) {
        const int j = h.col_of_row[static_cast<size_t>(i)];
        if (j >= m) continue;
        const geo::Vec3& p = preds[static_cast<size_t>(i)];
        const geo::Vec3& g = gts[static_cast<size_t>(j)];
        if (p.norm() == 0.0 || g.norm() == 0.0) continue;
        out.mean_normal_deg += plane_normal_angle_deg(p, g);
        out.mean_offset_mm += std::fabs(1.0 / p.norm() - 1.0 / g.norm()) * 1000.0;
        ++out.matched;
    }
    if (out.matched > 0) {
        out.mean_normal_deg /= out.matched;
        out.mean_offset_mm /= out.matched;
    }
    return out;
}

bool ap_conditions_hold(const geo::Vec3& det_param, const geo::Vec3& gt_param,
                        const ApTier& tier) {
    if (det_param.norm() == 0.0 || gt_param.norm() == 0.0) return false;
    if (tier.use_normal && plane_normal_angle_deg(det_param, gt_param) > tier.max_normal_deg)
        return false;
    if (tier.use_offset &&
        std::fabs(1.0 / det_param.norm() - 1.0 / gt_param.norm()) > tier.max_offset_m)
        return false;
    return true;
}

double average_precision(const std::vector<char>& is_tp_in_score_order, double n_gt) {
    if (n_gt <= 0.0) return is_tp_in_score_order.empty() ? 1.0 : 0.0;
    std::vector<double> prec, rec;
    double tp = 0.0;
    for (size_t i = 0; i < is_tp_in_score_order.size(); ++i) {
        tp += is_tp_in_score_order[i] ? 1.0 : 0.0;
        prec.push_back(tp / static_cast<double>(i + 1));
        rec.push_back(tp / n_gt);
    }
    double ap = 0.0, prev_r = 0.0;
    for (size_t i = 0; i < prec.size(); ++i) {
        if (rec[i] <= prev_r) continue;
        double envelope = 0.0;
        for (size_t j = i; j < prec.size(); ++j) envelope = std::max(envelope, prec[j]);
        ap += (rec[i] - prev_r) * envelope;
        prev_r = rec[i];
    }
    return ap;
}

double reconstruction_ap(const std::vector<ApDetection>& detections,
                         const std::vector<EvalPlane>& gts, const ApTier& tier) {
    if (gts.empty()) return detections.empty() ? 1.0 : 0.0;

    std::vector<int> order(detections.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return detections[static_cast<size_t>(a)].score > detections[static_cast<size_t>(b)].score;
    });

    std::vector<char> gt_used(gts.size(), 0);
    std::vector<char> is_tp(order.size(), 0);
    for (size_t oi = 0; oi < order.size(); ++oi) {
        const ApDetection& det = detections[static_cast<size_t>(order[oi])];
        int best = -1;
        double best_iou = 0.5 - 1e-12;
        for (size_t j = 0; j < gts.size(); ++j) {
            if (gt_used[j]) continue;
            const double iou = mask_iou(det.mask, gts[j].mask);
            if (iou < best_iou) continue;
            if (!ap_conditions_hold(det.param, gts[j].param, tier)) continue;
            best = static_cast<int>(j);
            best_iou = iou;
        }
        if (best >= 0) {
            gt_used[static_cast<size_t>(best)] = 1;
            is_tp[oi] = 1;
        }
    }
    return average_precision(is_tp, static_cast<double>(gts.size()));
}

double rotation_error_deg(const geo::PoseSE3& a, const geo::PoseSE3& b) {
    const double d = std::min(1.0, std::fabs(a.q.dot(b.q)));
    return 2.0 * std::acos(d) * 180.0 / M_PI;
}

double translation_error_m(const geo::PoseSE3& a, const geo::PoseSE3& b) {
    return (a.t - b.t).norm();
}

PoseStats pose_stats(const std::vector<geo::PoseSE3>& pred, const std::vector<geo::PoseSE3>& gt) {
    if (pred.empty() || pred.size() != gt.size())
        throw ContractError("pose_stats needs equal non-empty lists");
    std::vector<double> re, te;
    for (size_t i = 0; i < pred.size(); ++i) {
        re.push_back(rotation_error_deg(pred[i], gt[i]));
        te.push_back(translation_error_m(pred[i], gt[i]));
    }
    PoseStats out;
    out.rot_median_deg = median(re);
    out.trans_median_m = median(te);
    for (double v : re) out.rot_mean_deg += v;
    for (double v : te) out.trans_mean_m += v;
    out.rot_mean_deg /= re.size();
    out.trans_mean_m /= te.size();
    const double n = static_cast<double>(re.size());
    for (int k = 0; k < 3; ++k) {
        for (double v : te)
            if (v <= kTransThresholds[k]) out.trans_pct[k] += 1.0;
        for (double v : re)
            if (v <= kRotThresholdsDeg[k]) out.rot_pct[k] += 1.0;
        out.trans_pct[k] *= 100.0 / n;
        out.rot_pct[k] *= 100.0 / n;
    }
    return out;
}

}  // namespace planeq::metrics
