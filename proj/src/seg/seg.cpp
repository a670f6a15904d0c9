#include "poselab/seg/seg.hpp"

#include <algorithm>
#include <cmath>

#include "poselab/trainer.hpp"
#include "poselab/util/csv.hpp"
#include "poselab/util/parallel.hpp"

namespace poselab::seg {

ArchKind arch_kind_from_string(const std::string& s) {
    if (s == "unet-lite") return ArchKind::unet_lite;
    if (s == "fpn-lite") return ArchKind::fpn_lite;
    fail("seg: unknown architecture '", s, "' (unet-lite|fpn-lite)");
}

std::string to_string(ArchKind k) {
    return k == ArchKind::unet_lite ? "unet-lite" : "fpn-lite";
}

SegModel SegModel::build(const SegArchitecture& arch, uint64_t seed) {
    require(arch.height % 4 == 0 && arch.width % 4 == 0,
            "seg: input size must be divisible by 4, got ", arch.width, "x",
            arch.height);
    require(arch.classes >= 2, "seg: need at least 2 classes");
    require(arch.tap == "bottleneck" || arch.tap == "enc2" ||
                (arch.tap == "p3" && arch.kind == ArchKind::fpn_lite),
            "seg: unknown tap layer '", arch.tap, "'");
    SegModel m;
    m.arch_ = arch;
    Rng rng(seed);
    auto& ps = m.params_;
    int w1 = arch.widths[0], w2 = arch.widths[1], w3 = arch.widths[2];
    int c = arch.classes;

    auto conv = [&](const std::string& name, int cout, int cin, int k) {
        ps.add(name + ".w", ParamSet::he_conv(cout, cin, k, rng));
        ps.add(name + ".b", Tensor::zeros({cout}));
    };
    conv("enc1.conv1", w1, 3, 3);
    conv("enc1.conv2", w1, w1, 3);
    conv("enc2.conv1", w2, w1, 3);
    conv("enc2.conv2", w2, w2, 3);
    conv("enc3.conv1", w3, w2, 3);
    conv("enc3.conv2", w3, w3, 3);
    if (arch.kind == ArchKind::unet_lite) {
        ps.add("up2.w", ParamSet::he_tconv(w2, w3, rng));
        ps.add("up2.b", Tensor::zeros({w2}));
        conv("dec2.conv1", w2, 2 * w2, 3);
        ps.add("up1.w", ParamSet::he_tconv(w1, w2, rng));
        ps.add("up1.b", Tensor::zeros({w1}));
        conv("dec1.conv1", w1, 2 * w1, 3);
        conv("head", c, w1, 1);
    } else {
        conv("lat3", w1, w3, 1);
        conv("lat2", w1, w2, 1);
        conv("lat1", w1, w1, 1);
        conv("smooth", w1, w1, 3);
        conv("head", c, w1, 1);
    }
    return m;
}

SegForward SegModel::forward(Tape& tape, const Tensor& image255,
                             bool trainable_params, bool image_grad) const {
    require(image255.ndim() == 3 && image255.dim(0) == 3 &&
                image255.dim(1) == arch_.height && image255.dim(2) == arch_.width,
            "seg: expected [3,", arch_.height, ",", arch_.width, "] image, got ",
            image255.shape_str());
    NodeId input = tape.leaf(image255, image_grad);
    return forward_from(tape, input, params_.register_on(tape, trainable_params));
}

SegForward SegModel::forward_from(Tape& tape, NodeId input_leaf,
                                  const std::vector<NodeId>& param_ids) const {
    SegForward f;
    f.input = input_leaf;
    f.param_ids = param_ids;
    auto p = [&](const char* name) {
        int idx = params_.index_of(name);
        require(idx >= 0, "seg: missing parameter ", name);
        return f.param_ids[std::size_t(idx)];
    };
    auto conv_relu = [&](NodeId x, const std::string& base) {
        return tape.relu(
            tape.conv2d(x, p((base + ".w").c_str()), p((base + ".b").c_str())));
    };

    NodeId x = tape.scale(f.input, 1.0 / 255.0);
    NodeId e1 = conv_relu(conv_relu(x, "enc1.conv1"), "enc1.conv2");
    NodeId e2 = conv_relu(conv_relu(tape.maxpool2x2(e1), "enc2.conv1"),
                          "enc2.conv2");
    NodeId e3 = conv_relu(conv_relu(tape.maxpool2x2(e2), "enc3.conv1"),
                          "enc3.conv2");

    if (arch_.kind == ArchKind::unet_lite) {
        NodeId u2 = tape.tconv2x2(e3, p("up2.w"), p("up2.b"));
        NodeId d2 = conv_relu(tape.concat_channels(u2, e2), "dec2.conv1");
        NodeId u1 = tape.tconv2x2(d2, p("up1.w"), p("up1.b"));
        NodeId d1 = conv_relu(tape.concat_channels(u1, e1), "dec1.conv1");
        f.logits = tape.conv2d(d1, p("head.w"), p("head.b"));
        f.tap = arch_.tap == "enc2" ? e2 : e3;
    } else {
        NodeId p3 = tape.conv2d(e3, p("lat3.w"), p("lat3.b"));
        NodeId p2 = tape.add(tape.conv2d(e2, p("lat2.w"), p("lat2.b")),
                             tape.upsample2x(p3));
        NodeId p1 = tape.add(tape.conv2d(e1, p("lat1.w"), p("lat1.b")),
                             tape.upsample2x(p2));
        NodeId s = conv_relu(p1, "smooth");
        f.logits = tape.conv2d(s, p("head.w"), p("head.b"));
        f.tap = arch_.tap == "p3" ? p3 : (arch_.tap == "enc2" ? e2 : e3);
    }
    return f;
}

SegModel::Prediction SegModel::predict(const Tensor& image255) const {
    Tape tape;
    SegForward f = forward(tape, image255);
    Prediction pr;
    pr.logits = tape.val(f.logits);
    pr.mask = argmax_channels(pr.logits);
    pr.tap = tape.val(f.tap);
    return pr;
}

void SegModel::save_with_meta(const std::string& path) const {
    params_.save(path);
    std::string meta = to_string(arch_.kind) + "\n" +
                       std::to_string(arch_.widths[0]) + " " +
                       std::to_string(arch_.widths[1]) + " " +
                       std::to_string(arch_.widths[2]) + "\n" +
                       std::to_string(arch_.classes) + " " +
                       std::to_string(arch_.height) + " " +
                       std::to_string(arch_.width) + "\n" + arch_.tap + "\n";
    std::FILE* f = std::fopen((path + ".meta").c_str(), "wb");
    require(f, "seg: cannot write ", path, ".meta");
    std::fwrite(meta.data(), 1, meta.size(), f);
    std::fclose(f);
}

SegModel SegModel::load_with_meta(const std::string& path) {
    std::FILE* f = std::fopen((path + ".meta").c_str(), "rb");
    require(f, "seg: missing checkpoint meta ", path, ".meta");
    char kind[32], tap[32];
    SegArchitecture a;
    int got = std::fscanf(f, "%31s %d %d %d %d %d %d %31s", kind,
                          &a.widths[0], &a.widths[1], &a.widths[2], &a.classes,
                          &a.height, &a.width, tap);
    std::fclose(f);
    require(got == 8, "seg: malformed meta for ", path);
    a.kind = arch_kind_from_string(kind);
    a.tap = tap;
    SegModel m = build(a, 0);
    m.load(path);
    return m;
}

double mean_foreground_iou(const SegModel& model, const geom::Dataset& ds,
                           int threads) {
    require(ds.size() > 0, "iou: empty dataset");
    int classes = model.arch().classes;
    std::vector<std::array<std::size_t, 3>> per_img_counts(
        ds.size() * std::size_t(classes), {0, 0, 0});  // tp, fp, fn
    parallel_for(
        ds.size(),
        [&](std::size_t i) {
            auto pred = model.predict(ds.image_tensor(i));
            const auto& gt = ds.masks[i];
            for (std::size_t p = 0; p < gt.size(); ++p) {
                int pc = pred.mask[p], gc = gt[p];
                if (pc == gc && gc > 0)
                    per_img_counts[i * std::size_t(classes) + std::size_t(gc)][0]++;
                else if (pc != gc) {
                    if (pc > 0)
                        per_img_counts[i * std::size_t(classes) + std::size_t(pc)][1]++;
                    if (gc > 0)
                        per_img_counts[i * std::size_t(classes) + std::size_t(gc)][2]++;
                }
            }
        },
        threads);
    double total = 0;
    int counted = 0;
    for (int c = 1; c < classes; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            tp += per_img_counts[i * std::size_t(classes) + std::size_t(c)][0];
            fp += per_img_counts[i * std::size_t(classes) + std::size_t(c)][1];
            fn += per_img_counts[i * std::size_t(classes) + std::size_t(c)][2];
        }
        if (tp + fp + fn == 0) continue;  // class absent from this split
        total += double(tp) / double(tp + fp + fn);
        ++counted;
    }
    require(counted > 0, "iou: no foreground classes present");
    return total / counted;
}

std::string SegTrainLog::csv() const {
    CsvWriter w({"epoch", "loss", "iou"});
    for (const auto& e : epochs)
        w.add_row({std::to_string(e.epoch), fmt_double(e.loss),
                   fmt_double(e.iou)});
    return w.to_string();
}

SegTrainLog train_segmentation(SegModel& model, const geom::Dataset& train,
                               const geom::Dataset& val,
                               const SegTrainConfig& cfg) {
    require(train.size() > 0, "seg-train: empty training set");
    // Per-sample CE targets, built once.
    std::vector<std::vector<int>> targets(train.size());
    std::vector<Tensor> images(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        targets[i].assign(train.masks[i].begin(), train.masks[i].end());
        images[i] = train.image_tensor(i);
    }

    SegTrainLog log;
    Rng shuffle_rng(cfg.seed ^ 0x5e9f00d);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double lr = epoch >= cfg.lr_drop_epoch ? cfg.lr * cfg.lr_drop_factor
                                               : cfg.lr;
        double loss = run_epoch(
            model.params(), order, cfg.batch, lr,
            [&](Tape& tape, std::size_t idx, const std::vector<NodeId>& ids) {
                NodeId input = tape.leaf(images[idx], false);
                SegForward f = model.forward_from(tape, input, ids);
                return tape.pixelwise_cross_entropy(f.logits, targets[idx]);
            },
            cfg.threads);

        EpochLog el;
        el.epoch = epoch;
        el.loss = loss;
        el.iou = -1;
        bool last = epoch == cfg.max_epochs;
        if (epoch % cfg.eval_every == 0 || last) {
            el.iou = mean_foreground_iou(model, val, cfg.threads);
            log.final_iou = el.iou;
        }
        log.epochs.push_back(el);
        if (cfg.verbose)
            std::fprintf(stderr, "[seg] epoch %d loss %.4f iou %.4f\n", epoch,
                         el.loss, el.iou);
        if (el.iou >= cfg.early_stop_iou) break;
    }
    require(log.final_iou >= cfg.gate_iou,
            "seg-train: held-out IoU gate not reached: ", log.final_iou,
            " < ", cfg.gate_iou);
    return log;
}

}  // namespace poselab::seg
