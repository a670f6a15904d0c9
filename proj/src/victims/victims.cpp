#include "poselab/victims/victims.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "poselab/geom/pnp.hpp"
#include "poselab/geom/render.hpp"
#include "poselab/metrics/metrics.hpp"
#include "poselab/util/csv.hpp"
#include "poselab/util/image_io.hpp"
#include "poselab/util/parallel.hpp"

namespace poselab::victims {

using geom::CameraIntrinsics;
using geom::Correspondence;
using geom::ObjectModel;
using geom::Pose;
using geom::Vec2;
using geom::Vec3;

VictimKind kind_from_string(const std::string& s) {
    if (s == "keypoint") return VictimKind::keypoint;
    if (s == "dense") return VictimKind::dense;
    if (s == "direct") return VictimKind::direct;
    fail("victim: unknown kind '", s, "' (keypoint|dense|direct)");
}

std::string to_string(VictimKind k) {
    switch (k) {
        case VictimKind::keypoint: return "keypoint";
        case VictimKind::dense: return "dense";
        default: return "direct";
    }
}

VictimModel VictimModel::build(const VictimArch& arch, uint64_t seed) {
    require(arch.height % 4 == 0 && arch.width % 4 == 0,
            "victim: input size must be divisible by 4");
    if (arch.camera.fx == 0) {
        VictimArch fixed = arch;
        fixed.camera = geom::default_camera();
        return build(fixed, seed);
    }
    VictimModel m;
    m.arch_ = arch;
    Rng rng(seed);
    auto& ps = m.params_;
    int w1 = arch.widths[0], w2 = arch.widths[1], w3 = arch.widths[2];
    auto conv = [&](const std::string& name, int cout, int cin, int k) {
        ps.add(name + ".w", ParamSet::he_conv(cout, cin, k, rng));
        ps.add(name + ".b", Tensor::zeros({cout}));
    };
    conv("enc1.conv1", w1, 3, 3);
    conv("enc1.conv2", w1, w1, 3);
    conv("enc2.conv1", w2, w1, 3);
    conv("enc2.conv2", w2, w2, 3);
    conv("enc3.conv1", w3, w2, 3);
    if (arch.kind == VictimKind::direct) {
        conv("enc4.conv1", w3, w3, 3);
        ps.add("fc1.w", ParamSet::he_dense(arch.fc_hidden, w3, rng));
        ps.add("fc1.b", Tensor::zeros({arch.fc_hidden}));
        ps.add("fc2.w", ParamSet::he_dense(7, arch.fc_hidden, rng));
        ps.add("fc2.b", Tensor::zeros({7}));
    } else {
        ps.add("up2.w", ParamSet::he_tconv(w2, w3, rng));
        ps.add("up2.b", Tensor::zeros({w2}));
        conv("dec2.conv1", w2, w2, 3);
        ps.add("up1.w", ParamSet::he_tconv(w1, w2, rng));
        ps.add("up1.b", Tensor::zeros({w1}));
        conv("dec1.conv1", w1, w1, 3);
        conv("head_mask", 1, w1, 1);
        if (arch.kind == VictimKind::keypoint)
            conv("head_fields", 18, w1, 1);
        else
            conv("head_coords", 3, w1, 1);
    }
    return m;
}

VictimForward VictimModel::forward(Tape& tape, const Tensor& image255,
                                   bool trainable_params) const {
    require(image255.ndim() == 3 && image255.dim(0) == 3 &&
                image255.dim(1) == arch_.height && image255.dim(2) == arch_.width,
            "victim: expected [3,", arch_.height, ",", arch_.width,
            "] image, got ", image255.shape_str());
    NodeId input = tape.leaf(image255, false);
    return forward_from(tape, input,
                        params_.register_on(tape, trainable_params));
}

VictimForward VictimModel::forward_from(Tape& tape, NodeId input_leaf,
                                        const std::vector<NodeId>& ids) const {
    VictimForward f;
    f.input = input_leaf;
    f.param_ids = ids;
    auto p = [&](const std::string& name) {
        int idx = params_.index_of(name);
        require(idx >= 0, "victim: missing parameter ", name);
        return ids[std::size_t(idx)];
    };
    auto conv_relu = [&](NodeId x, const std::string& base) {
        return tape.relu(tape.conv2d(x, p(base + ".w"), p(base + ".b")));
    };

    NodeId x = tape.scale(f.input, 1.0 / 255.0);
    NodeId e1 = conv_relu(conv_relu(x, "enc1.conv1"), "enc1.conv2");
    NodeId e2 = conv_relu(conv_relu(tape.maxpool2x2(e1), "enc2.conv1"),
                          "enc2.conv2");
    NodeId e3 = conv_relu(tape.maxpool2x2(e2), "enc3.conv1");

    if (arch_.kind == VictimKind::direct) {
        NodeId e4 = conv_relu(e3, "enc4.conv1");
        NodeId g = tape.global_avg_pool(e4);
        NodeId h = tape.relu(tape.dense(g, p("fc1.w"), p("fc1.b")));
        f.pose_vec = tape.dense(h, p("fc2.w"), p("fc2.b"));
        return f;
    }
    NodeId u2 = tape.relu(tape.tconv2x2(e3, p("up2.w"), p("up2.b")));
    NodeId d2 = conv_relu(u2, "dec2.conv1");
    NodeId u1 = tape.relu(tape.tconv2x2(d2, p("up1.w"), p("up1.b")));
    NodeId d1 = conv_relu(u1, "dec1.conv1");
    f.mask_logit = tape.conv2d(d1, p("head_mask.w"), p("head_mask.b"));
    if (arch_.kind == VictimKind::keypoint)
        f.fields = tape.conv2d(d1, p("head_fields.w"), p("head_fields.b"));
    else
        f.coords = tape.conv2d(d1, p("head_coords.w"), p("head_coords.b"));
    return f;
}

void VictimModel::save_with_meta(const std::string& path) const {
    params_.save(path);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s %d %d %d %d %d %d %d %.17g %.17g %.17g %.17g\n",
                  to_string(arch_.kind).c_str(), arch_.cls, arch_.widths[0],
                  arch_.widths[1], arch_.widths[2], arch_.fc_hidden,
                  arch_.height, arch_.width, arch_.camera.fx, arch_.camera.fy,
                  arch_.camera.cx, arch_.camera.cy);
    std::FILE* f = std::fopen((path + ".meta").c_str(), "wb");
    require(f, "victim: cannot write ", path, ".meta");
    std::fputs(buf, f);
    std::fclose(f);
}

VictimModel VictimModel::load_with_meta(const std::string& path) {
    std::FILE* f = std::fopen((path + ".meta").c_str(), "rb");
    require(f, "victim: missing checkpoint meta ", path, ".meta");
    char kind[32];
    VictimArch a;
    int got = std::fscanf(f, "%31s %d %d %d %d %d %d %d %lg %lg %lg %lg", kind,
                          &a.cls, &a.widths[0], &a.widths[1], &a.widths[2],
                          &a.fc_hidden, &a.height, &a.width, &a.camera.fx,
                          &a.camera.fy, &a.camera.cx, &a.camera.cy);
    std::fclose(f);
    require(got == 12, "victim: malformed meta for ", path);
    a.kind = kind_from_string(kind);
    VictimModel m = build(a, 0);
    m.params_.load(path);
    return m;
}

namespace {

std::vector<uint8_t> predicted_mask(const Tensor& mask_logit) {
    std::vector<uint8_t> mask(mask_logit.data.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = mask_logit.data[i] > 0.0 ? 1 : 0;  // sigmoid(x) > 0.5
    return mask;
}

struct Line {
    Vec2 point;
    Vec2 dir;  // unit
};

}  // namespace

std::vector<VotedKeypoint> vote_keypoints(const std::vector<uint8_t>& mask,
                                          const Tensor& fields, int h, int w,
                                          Rng& rng, const VotingParams& vp) {
    require(fields.ndim() == 3 && fields.dim(0) == 18,
            "voting: fields must be [18,H,W], got ", fields.shape_str());
    std::vector<int> px;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) px.push_back(int(i));

    std::vector<VotedKeypoint> out(9);
    if (px.size() < 2) return out;

    std::size_t plane = std::size_t(h) * w;
    auto dir_at = [&](int k, int flat, Vec2& d) {
        double du = fields.data[std::size_t(2 * k) * plane + std::size_t(flat)];
        double dv = fields.data[std::size_t(2 * k + 1) * plane + std::size_t(flat)];
        double n = std::hypot(du, dv);
        if (n < 1e-9) return false;
        d = {du / n, dv / n};
        return true;
    };
    auto center_of = [&](int flat) {
        return Vec2{double(flat % w) + 0.5, double(flat / w) + 0.5};
    };

    for (int k = 0; k < 9; ++k) {
        Vec2 best_h{};
        int best_score = -1;
        for (int t = 0; t < vp.hypotheses; ++t) {
            int ia = px[std::size_t(rng.uniform_int(px.size()))];
            int ib = px[std::size_t(rng.uniform_int(px.size()))];
            if (ia == ib) continue;
            Vec2 da, db;
            if (!dir_at(k, ia, da) || !dir_at(k, ib, db)) continue;
            Vec2 pa = center_of(ia), pb = center_of(ib);
            double det = da.u * (-db.v) - (-db.u) * da.v;
            if (std::fabs(det) < 1e-9) continue;  // parallel rays, skip
            double rx = pb.u - pa.u, ry = pb.v - pa.v;
            double s = (rx * (-db.v) - (-db.u) * ry) / det;
            Vec2 hyp{pa.u + s * da.u, pa.v + s * da.v};

            int score = 0;
            for (int flat : px) {
                Vec2 d;
                if (!dir_at(k, flat, d)) continue;
                Vec2 c = center_of(flat);
                double vx = hyp.u - c.u, vy = hyp.v - c.v;
                double n = std::hypot(vx, vy);
                if (n < 1e-6 ||
                    (vx * d.u + vy * d.v) / n > vp.inlier_cos)
                    ++score;
            }
            if (score > best_score) {
                best_score = score;
                best_h = hyp;
            }
        }
        if (best_score < 2) continue;

        // Least-squares intersection of the inlier rays.
        double a00 = 0, a01 = 0, a11 = 0, b0 = 0, b1 = 0;
        int inl = 0;
        for (int flat : px) {
            Vec2 d;
            if (!dir_at(k, flat, d)) continue;
            Vec2 c = center_of(flat);
            double vx = best_h.u - c.u, vy = best_h.v - c.v;
            double n = std::hypot(vx, vy);
            if (!(n < 1e-6 || (vx * d.u + vy * d.v) / n > vp.inlier_cos))
                continue;
            ++inl;
            // I - d d^T
            double m00 = 1 - d.u * d.u, m01 = -d.u * d.v, m11 = 1 - d.v * d.v;
            a00 += m00;
            a01 += m01;
            a11 += m11;
            b0 += m00 * c.u + m01 * c.v;
            b1 += m01 * c.u + m11 * c.v;
        }
        VotedKeypoint vk;
        vk.inliers = inl;
        double det = a00 * a11 - a01 * a01;
        if (std::fabs(det) > 1e-9) {
            vk.point = {(b0 * a11 - a01 * b1) / det,
                        (a00 * b1 - a01 * b0) / det};
        } else {
            vk.point = best_h;
        }
        vk.valid = true;
        out[std::size_t(k)] = vk;
    }
    return out;
}

PoseResult estimate_keypoint_voting(const VictimModel& model,
                                    const Tensor& image255,
                                    const CameraIntrinsics& cam,
                                    const ObjectModel& object, Rng& rng,
                                    const VotingParams& vp) {
    require(model.arch().kind == VictimKind::keypoint,
            "estimate: model is not a keypoint victim");
    Tape tape;
    VictimForward f = model.forward(tape, image255);
    PoseResult out;
    out.mask = predicted_mask(tape.val(f.mask_logit));
    int count = 0;
    for (uint8_t v : out.mask) count += v;
    if (count < vp.min_mask_pixels) return out;  // object not found

    auto voted = vote_keypoints(out.mask, tape.val(f.fields),
                                model.arch().height, model.arch().width, rng,
                                vp);
    auto kp3 = object.keypoints3d();
    std::vector<Correspondence> corr;
    for (int k = 0; k < 9; ++k)
        if (voted[std::size_t(k)].valid)
            corr.push_back({kp3[std::size_t(k)], voted[std::size_t(k)].point});
    if (corr.size() < 6) return out;
    try {
        auto res = geom::ransac_pnp(corr, cam, rng);
        out.pose = res.pose;
        out.inliers = int(res.inliers.size());
    } catch (const Error&) {
        // pose not found: scored as a wrong pose
    }
    return out;
}

PoseResult estimate_dense_coords(const VictimModel& model,
                                 const Tensor& image255,
                                 const CameraIntrinsics& cam,
                                 const ObjectModel& object, Rng& rng,
                                 const VotingParams& vp) {
    require(model.arch().kind == VictimKind::dense,
            "estimate: model is not a dense-coordinate victim");
    Tape tape;
    VictimForward f = model.forward(tape, image255);
    PoseResult out;
    out.mask = predicted_mask(tape.val(f.mask_logit));
    std::vector<int> px;
    for (std::size_t i = 0; i < out.mask.size(); ++i)
        if (out.mask[i]) px.push_back(int(i));
    if (int(px.size()) < vp.min_mask_pixels) return out;

    const Tensor& coords = tape.val(f.coords);
    int w = model.arch().width;
    std::size_t plane = std::size_t(model.arch().height) * w;
    Vec3 span = object.bbox_hi - object.bbox_lo;
    std::size_t stride = std::max<std::size_t>(
        1, (px.size() + std::size_t(vp.max_dense_corr) - 1) /
               std::size_t(vp.max_dense_corr));
    std::vector<Correspondence> corr;
    for (std::size_t i = 0; i < px.size(); i += stride) {
        int flat = px[i];
        Vec3 p{object.bbox_lo.x + coords.data[std::size_t(flat)] * span.x,
               object.bbox_lo.y + coords.data[plane + std::size_t(flat)] * span.y,
               object.bbox_lo.z + coords.data[2 * plane + std::size_t(flat)] * span.z};
        corr.push_back({p, {double(flat % w) + 0.5, double(flat / w) + 0.5}});
    }
    if (corr.size() < 6) return out;
    try {
        auto res = geom::ransac_pnp(corr, cam, rng);
        out.pose = res.pose;
        out.inliers = int(res.inliers.size());
    } catch (const Error&) {
    }
    return out;
}

PoseResult estimate_direct(const VictimModel& model, const Tensor& image255) {
    require(model.arch().kind == VictimKind::direct,
            "estimate: model is not a direct victim");
    Tape tape;
    VictimForward f = model.forward(tape, image255);
    const Tensor& v = tape.val(f.pose_vec);
    PoseResult out;
    geom::Quat q{v.data[0], v.data[1], v.data[2], v.data[3]};
    double n = q.norm();
    q = n > 1e-12 ? q.normalized() : geom::Quat{};
    const auto& cam = model.arch().camera;
    double u = v.data[4] * model.arch().width;
    double vv = v.data[5] * model.arch().height;
    double z = std::max(0.05, v.data[6]);
    geom::Pose pose;
    pose.q = q;
    pose.t = {z * (u - cam.cx) / cam.fx, z * (vv - cam.cy) / cam.fy, z};
    out.pose = pose;
    return out;
}

PoseResult estimate(const VictimModel& model, const Tensor& image255,
                    const CameraIntrinsics& cam, const ObjectModel& object,
                    Rng& rng) {
    switch (model.arch().kind) {
        case VictimKind::keypoint:
            return estimate_keypoint_voting(model, image255, cam, object, rng);
        case VictimKind::dense:
            return estimate_dense_coords(model, image255, cam, object, rng);
        default:
            return estimate_direct(model, image255);
    }
}

namespace {

struct SampleTargets {
    Tensor mask;        // [1,H,W] binary
    Tensor mask_w;      // [1,H,W] all ones
    Tensor fields;      // [18,H,W]
    Tensor fields_w;    // [18,H,W] mask replicated
    Tensor coords;      // [3,H,W]
    Tensor coords_w;    // [3,H,W]
    Tensor pose_vec;    // [7] quat placeholder + uvz (quat filled per step)
    std::vector<geom::Quat> quat_candidates;  // +-(gt * sym)
    double field_norm = 1, coord_norm = 1;
};

SampleTargets build_targets(const geom::Dataset& ds, std::size_t idx,
                            const VictimArch& arch) {
    const auto& ann = ds.ann[idx].primary();
    const auto& model3d = ds.model_for_class(arch.cls);
    int h = arch.height, w = arch.width;
    std::size_t plane = std::size_t(h) * w;

    SampleTargets t;
    t.mask = Tensor::zeros({1, h, w});
    t.mask_w = Tensor::full({1, h, w}, 1.0);
    int count = 0;
    for (std::size_t i = 0; i < plane; ++i)
        if (ds.masks[idx][i] == uint8_t(arch.cls)) {
            t.mask.data[i] = 1.0;
            ++count;
        }

    if (arch.kind == VictimKind::keypoint) {
        t.fields = Tensor::zeros({18, h, w});
        t.fields_w = Tensor::zeros({18, h, w});
        for (std::size_t i = 0; i < plane; ++i) {
            if (t.mask.data[i] == 0.0) continue;
            double cx = double(i % std::size_t(w)) + 0.5;
            double cy = double(i / std::size_t(w)) + 0.5;
            for (int k = 0; k < 9; ++k) {
                double du = ann.keypoints[std::size_t(k)].u - cx;
                double dv = ann.keypoints[std::size_t(k)].v - cy;
                double n = std::hypot(du, dv);
                if (n > 1e-9) {
                    t.fields.data[std::size_t(2 * k) * plane + i] = du / n;
                    t.fields.data[std::size_t(2 * k + 1) * plane + i] = dv / n;
                }
                t.fields_w.data[std::size_t(2 * k) * plane + i] = 1.0;
                t.fields_w.data[std::size_t(2 * k + 1) * plane + i] = 1.0;
            }
        }
        t.field_norm = 18.0 * std::max(1, count);
    } else if (arch.kind == VictimKind::dense) {
        auto maps = geom::render_object_maps(model3d, ann.pose,
                                             ds.ann[idx].camera, w, h);
        t.coords = maps.coords;
        t.coords_w = Tensor::zeros({3, h, w});
        for (std::size_t i = 0; i < plane; ++i) {
            if (!maps.mask[i]) continue;
            t.coords_w.data[i] = 1.0;
            t.coords_w.data[plane + i] = 1.0;
            t.coords_w.data[2 * plane + i] = 1.0;
        }
        t.coord_norm = 3.0 * std::max(1, count);
    } else {
        Vec2 c = geom::project_point(model3d.centroid(), ann.pose,
                                     ds.ann[idx].camera);
        t.pose_vec = Tensor::zeros({7});
        t.pose_vec.data[4] = c.u / w;
        t.pose_vec.data[5] = c.v / h;
        t.pose_vec.data[6] = ann.pose.t.z;
        for (const auto& s : model3d.symmetry_rotations) {
            geom::Quat cand = (ann.pose.q * s).normalized();
            t.quat_candidates.push_back(cand);
            t.quat_candidates.push_back({-cand.w, -cand.x, -cand.y, -cand.z});
        }
    }
    return t;
}

// sum(weight * (pred - target)^2) / norm as tape nodes.
NodeId weighted_sq_err(Tape& tape, NodeId pred, const Tensor& target,
                       const Tensor& weight, double norm) {
    NodeId diff = tape.add(pred, tape.scale(tape.leaf(target), -1.0));
    NodeId sq = tape.mul(diff, diff);
    NodeId wsum = tape.sum(tape.mul(sq, tape.leaf(weight)));
    return tape.scale(wsum, 1.0 / norm);
}

}  // namespace

std::string VictimTrainLog::csv() const {
    CsvWriter w({"epoch", "loss", "val_add"});
    for (const auto& r : rows)
        w.add_row({std::to_string(r.epoch), fmt_double(r.loss),
                   fmt_double(r.val_add)});
    return w.to_string();
}

double eval_add_accuracy(const VictimModel& model, const geom::Dataset& ds,
                         uint64_t seed, int limit, int threads) {
    auto idxs = ds.indices_of_class(model.arch().cls);
    require(!idxs.empty(), "victim-eval: dataset has no class ",
            model.arch().cls, " samples");
    if (limit > 0 && int(idxs.size()) > limit) idxs.resize(std::size_t(limit));
    const auto& object = ds.model_for_class(model.arch().cls);

    std::vector<metrics::PoseEstimate> est(idxs.size());
    std::vector<Pose> gts(idxs.size());
    Rng base(seed);
    parallel_for(
        idxs.size(),
        [&](std::size_t i) {
            std::size_t idx = idxs[i];
            Rng r = base.child(uint64_t(ds.ann[idx].id));
            PoseResult pr = estimate(model, ds.image_tensor(idx),
                                     ds.ann[idx].camera, object, r);
            est[i] = pr.pose;
            gts[i] = ds.ann[idx].primary().pose;
        },
        threads);
    return metrics::add_accuracy(est, gts, object);
}

VictimTrainLog train_victim(VictimModel& model, const geom::Dataset& train,
                            const geom::Dataset& val,
                            const VictimTrainConfig& cfg) {
    const VictimArch& arch = model.arch();
    auto idxs = train.indices_of_class(arch.cls);
    require(!idxs.empty(), "victim-train: no samples of class ", arch.cls);

    std::vector<Tensor> images(idxs.size());
    std::vector<SampleTargets> targets(idxs.size());
    parallel_for(idxs.size(), [&](std::size_t i) {
        images[i] = train.image_tensor(idxs[i]);
        targets[i] = build_targets(train, idxs[i], arch);
    }, cfg.threads);

    VictimTrainLog log;
    Rng shuffle_rng(cfg.seed ^ 0x71c71ull);
    std::vector<std::size_t> order(idxs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double lr = epoch >= cfg.lr_drop_epoch ? cfg.lr * cfg.lr_drop_factor
                                               : cfg.lr;
        double loss = run_epoch(
            model.params(), order, cfg.batch, lr,
            [&](Tape& tape, std::size_t i, const std::vector<NodeId>& ids) {
                NodeId input = tape.leaf(images[i], false);
                VictimForward f = model.forward_from(tape, input, ids);
                const SampleTargets& t = targets[i];
                if (arch.kind == VictimKind::direct) {
                    // Pick the symmetry/sign candidate closest to the
                    // current prediction, then regress against it.
                    const Tensor& pv = tape.val(f.pose_vec);
                    Tensor target = t.pose_vec;
                    double best = 1e18;
                    for (const auto& c : t.quat_candidates) {
                        double d = (pv.data[0] - c.w) * (pv.data[0] - c.w) +
                                   (pv.data[1] - c.x) * (pv.data[1] - c.x) +
                                   (pv.data[2] - c.y) * (pv.data[2] - c.y) +
                                   (pv.data[3] - c.z) * (pv.data[3] - c.z);
                        if (d < best) {
                            best = d;
                            target.data[0] = c.w;
                            target.data[1] = c.x;
                            target.data[2] = c.y;
                            target.data[3] = c.z;
                        }
                    }
                    Tensor wq = Tensor({7}, {2, 2, 2, 2, 10, 10, 10});
                    return weighted_sq_err(tape, f.pose_vec, target, wq, 1.0);
                }
                NodeId bce = tape.sigmoid_bce(f.mask_logit, t.mask, t.mask_w);
                if (arch.kind == VictimKind::keypoint) {
                    NodeId fl = weighted_sq_err(tape, f.fields, t.fields,
                                                t.fields_w, t.field_norm);
                    return tape.add(bce, fl);
                }
                NodeId cl = weighted_sq_err(tape, f.coords, t.coords,
                                            t.coords_w, t.coord_norm);
                return tape.add(bce, tape.scale(cl, 3.0));
            },
            cfg.threads);

        VictimTrainLog::Row row;
        row.epoch = epoch;
        row.loss = loss;
        bool last = epoch == cfg.max_epochs;
        if (epoch % cfg.eval_every == 0 || last) {
            row.val_add = eval_add_accuracy(model, val, cfg.seed ^ 0xeva1,
                                            cfg.eval_subset, cfg.threads);
            log.final_add = row.val_add;
        }
        log.rows.push_back(row);
        if (cfg.verbose)
            std::fprintf(stderr, "[victim %s cls=%d] epoch %d loss %.5f add %.3f\n",
                         to_string(arch.kind).c_str(), arch.cls, epoch,
                         row.loss, row.val_add);
        if (row.val_add >= cfg.early_stop_add) break;
    }
    require(log.final_add >= cfg.gate_add,
            "victim-train: clean ADD gate not reached: ", log.final_add, " < ",
            cfg.gate_add);
    return log;
}

void dump_intermediates(const VictimModel& model, const Tensor& image255,
                        const std::string& outdir) {
    require(model.arch().kind != VictimKind::direct,
            "dump-intermediates: direct victims have no spatial intermediates");
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    Tape tape;
    VictimForward f = model.forward(tape, image255);
    int h = model.arch().height, w = model.arch().width;
    std::size_t plane = std::size_t(h) * w;

    const Tensor& ml = tape.val(f.mask_logit);
    Image8 mask_img;
    mask_img.w = w;
    mask_img.h = h;
    mask_img.channels = 1;
    mask_img.pixels.resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
        mask_img.pixels[i] = uint8_t(std::lround(255.0 * sigmoid(ml.data[i])));
    write_png((fs::path(outdir) / "mask.png").string(), mask_img);

    if (model.arch().kind == VictimKind::keypoint) {
        const Tensor& fields = tape.val(f.fields);
        for (int k = 0; k < 9; ++k) {
            Image8 img;
            img.w = w;
            img.h = h;
            img.channels = 3;
            img.pixels.resize(plane * 3);
            for (std::size_t i = 0; i < plane; ++i) {
                double du = fields.data[std::size_t(2 * k) * plane + i];
                double dv = fields.data[std::size_t(2 * k + 1) * plane + i];
                // Direction-to-color wheel: angle -> hue, magnitude -> value.
                double ang = std::atan2(dv, du);
                double mag = std::min(1.0, std::hypot(du, dv));
                double r = 0.5 + 0.5 * std::cos(ang);
                double g = 0.5 + 0.5 * std::cos(ang - 2.0943951023931953);
                double b = 0.5 + 0.5 * std::cos(ang + 2.0943951023931953);
                img.pixels[3 * i] = uint8_t(std::lround(255 * r * mag));
                img.pixels[3 * i + 1] = uint8_t(std::lround(255 * g * mag));
                img.pixels[3 * i + 2] = uint8_t(std::lround(255 * b * mag));
            }
            char name[32];
            std::snprintf(name, sizeof(name), "field_%d.png", k);
            write_png((fs::path(outdir) / name).string(), img);
        }
    } else {
        const Tensor& coords = tape.val(f.coords);
        Image8 img;
        img.w = w;
        img.h = h;
        img.channels = 3;
        img.pixels.resize(plane * 3);
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c)
                img.pixels[3 * i + std::size_t(c)] = uint8_t(std::lround(
                    255.0 * std::clamp(coords.data[std::size_t(c) * plane + i],
                                       0.0, 1.0)));
        write_png((fs::path(outdir) / "coords.png").string(), img);
    }
}

}  // namespace poselab::victims
