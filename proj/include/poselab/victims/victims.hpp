#pragma once

#include <optional>
#include <string>

#include "poselab/geom/dataset.hpp"
#include "poselab/params.hpp"
#include "poselab/tape.hpp"
#include "poselab/trainer.hpp"

namespace poselab::victims {

enum class VictimKind { keypoint, dense, direct };

VictimKind kind_from_string(const std::string& s);
std::string to_string(VictimKind k);

struct VictimArch {
    VictimKind kind = VictimKind::keypoint;
    int cls = 1;  // object class this model serves
    std::array<int, 3> widths = {10, 20, 40};
    int fc_hidden = 64;
    int height = 96, width = 128;
    // Intrinsics are baked in at build time; the direct head regresses the
    // projected center and depth and decodes translation through them.
    geom::CameraIntrinsics camera;
};

struct VictimForward {
    NodeId input = -1;
    NodeId mask_logit = -1;  // [1,H,W] (keypoint/dense)
    NodeId fields = -1;      // [18,H,W] unit vectors toward the 9 keypoints
    NodeId coords = -1;      // [3,H,W] normalized model coordinates
    NodeId pose_vec = -1;    // [7] = quaternion + (u/W, v/H, z) (direct)
    std::vector<NodeId> param_ids;
};

class VictimModel {
public:
    static VictimModel build(const VictimArch& arch, uint64_t seed);

    const VictimArch& arch() const { return arch_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    VictimForward forward(Tape& tape, const Tensor& image255,
                          bool trainable_params = false) const;
    VictimForward forward_from(Tape& tape, NodeId input_leaf,
                               const std::vector<NodeId>& param_ids) const;

    void save_with_meta(const std::string& path) const;
    static VictimModel load_with_meta(const std::string& path);

private:
    VictimArch arch_;
    ParamSet params_;
};

struct PoseResult {
    std::optional<geom::Pose> pose;  // nullopt = "object not found"
    int inliers = 0;
    std::vector<uint8_t> mask;  // predicted binary mask (empty for direct)
};

// Voting hyperparameters (desk-scale choices, recorded here as the single
// source of truth): 128 pixel-pair hypotheses per keypoint, inlier
// agreement cos > 0.99, at most 500 dense correspondences, masks under 20
// pixels are "object not found".
struct VotingParams {
    int hypotheses = 128;
    double inlier_cos = 0.99;
    int max_dense_corr = 500;
    int min_mask_pixels = 20;
};

PoseResult estimate_keypoint_voting(const VictimModel& model,
                                    const Tensor& image255,
                                    const geom::CameraIntrinsics& cam,
                                    const geom::ObjectModel& object, Rng& rng,
                                    const VotingParams& vp = {});

PoseResult estimate_dense_coords(const VictimModel& model,
                                 const Tensor& image255,
                                 const geom::CameraIntrinsics& cam,
                                 const geom::ObjectModel& object, Rng& rng,
                                 const VotingParams& vp = {});

PoseResult estimate_direct(const VictimModel& model, const Tensor& image255);

// Dispatch on the model kind.
PoseResult estimate(const VictimModel& model, const Tensor& image255,
                    const geom::CameraIntrinsics& cam,
                    const geom::ObjectModel& object, Rng& rng);

// Keypoint voting on caller-supplied mask and field maps: the injected
// ground-truth oracle path (bypasses the network).
struct VotedKeypoint {
    geom::Vec2 point;
    bool valid = false;
    int inliers = 0;
};
std::vector<VotedKeypoint> vote_keypoints(const std::vector<uint8_t>& mask,
                                          const Tensor& fields, int h, int w,
                                          Rng& rng, const VotingParams& vp = {});

// Per-pixel intermediate dumps (mask + vector fields or coordinates).
// Throws for the direct kind, which has no spatial intermediates.
void dump_intermediates(const VictimModel& model, const Tensor& image255,
                        const std::string& outdir);

struct VictimTrainConfig {
    int max_epochs = 40;
    double lr = 1e-3;
    double lr_drop_factor = 0.1;
    int lr_drop_epoch = 32;
    int batch = 2;
    uint64_t seed = 1;
    double gate_add = 0.80;
    double early_stop_add = 0.90;
    int eval_every = 4;
    int eval_subset = 64;  // val images used for the in-training metric
    int threads = 0;
    bool verbose = false;
};

struct VictimTrainLog {
    struct Row {
        int epoch = 0;
        double loss = 0;
        double val_add = -1;
    };
    std::vector<Row> rows;
    double final_add = 0;
    std::string csv() const;
};

// Trains on the dataset samples whose primary object matches the model
// class. Throws if the clean ADD gate is not reached.
VictimTrainLog train_victim(VictimModel& model, const geom::Dataset& train,
                            const geom::Dataset& val,
                            const VictimTrainConfig& cfg);

// Clean ADD accuracy of the model over its class samples in the dataset.
double eval_add_accuracy(const VictimModel& model, const geom::Dataset& ds,
                         uint64_t seed, int limit = 0, int threads = 0);

}  // namespace poselab::victims
