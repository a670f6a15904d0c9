#pragma once

#include <string>
#include <vector>

#include "poselab/geom/render.hpp"
#include "poselab/util/image_io.hpp"

namespace poselab::geom {

struct ObjectAnnotation {
    int cls = 0;
    Pose pose;
    std::array<Vec2, 9> keypoints;
};

struct SampleAnnotation {
    int id = 0;
    std::string file;
    CameraIntrinsics camera;
    std::vector<ObjectAnnotation> objects;

    const ObjectAnnotation& primary() const {
        require(!objects.empty(), "annotation: no objects in sample");
        return objects.front();
    }
};

struct Dataset {
    std::string root;
    std::string split;
    int width = 0, height = 0;
    std::vector<Image8> images;
    std::vector<std::vector<uint8_t>> masks;
    std::vector<SampleAnnotation> ann;
    std::vector<ObjectModel> models;

    std::size_t size() const { return images.size(); }
    Tensor image_tensor(std::size_t i) const { return rgb8_to_tensor(images[i]); }
    const ObjectModel& model_for_class(int cls) const;
    // Indices of samples whose primary object has the given class.
    std::vector<std::size_t> indices_of_class(int cls) const;
};

struct DatasetGenSpec {
    int n_train = 360;
    int n_test = 200;
    uint64_t seed = 1;
    RenderOptions render;
    double distractor_prob = 0.0;
    bool force = false;
};

// Writes root/{train,test}/{images,masks}/%06d.png, per-split
// annotations.json, and root/models.json. Primary classes rotate
// round-robin so every object class is equally represented. Refuses to
// overwrite a non-empty directory unless spec.force.
void make_dataset(const std::string& root, const DatasetGenSpec& spec);

Dataset load_dataset(const std::string& root, const std::string& split);
std::vector<ObjectModel> load_models(const std::string& root);

// Adversarial export mirror: root/<split>/images/%06d.png.
std::string split_image_path(const std::string& root, const std::string& split,
                             int id);

}  // namespace poselab::geom
