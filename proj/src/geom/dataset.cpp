#include "poselab/geom/dataset.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace poselab::geom {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json quat_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }
Quat quat_from(const json& j) { return {j.at(0), j.at(1), j.at(2), j.at(3)}; }

json camera_json(const CameraIntrinsics& c) {
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}};
}
CameraIntrinsics camera_from(const json& j) {
    return {j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy")};
}

std::string index_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.png", id);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "dataset: cannot write ", path.string());
    f << text;
}

json load_json(const fs::path& path) {
    std::ifstream f(path);
    require(f.good(), "dataset: cannot open ", path.string());
    return json::parse(f);
}

void write_split(const std::string& root, const std::string& split,
                 const std::vector<ObjectModel>& models, int count,
                 const CameraIntrinsics& cam, const RenderOptions& opt,
                 Rng& rng) {
    fs::path dir = fs::path(root) / split;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    json ann;
    ann["split"] = split;
    ann["width"] = opt.width;
    ann["height"] = opt.height;
    ann["images"] = json::array();
    for (int i = 0; i < count; ++i) {
        int primary = i % int(models.size());
        Rng sample_rng = rng.child(uint64_t(i));
        SceneSample s = render_sample(models, primary, cam, opt, sample_rng);
        write_png((dir / "images" / index_name(i)).string(),
                  tensor_to_rgb8(s.image));
        write_png((dir / "masks" / index_name(i)).string(),
                  mask_to_gray8(s.mask, opt.height, opt.width));
        json rec;
        rec["id"] = i;
        rec["file"] = "images/" + index_name(i);
        rec["camera"] = camera_json(cam);
        rec["objects"] = json::array();
        for (const auto& ro : s.objects) {
            json o;
            o["class"] = models[std::size_t(ro.model_idx)].cls;
            o["q"] = quat_json(ro.pose.q);
            o["t"] = vec3_json(ro.pose.t);
            json kps = json::array();
            for (const auto& k : ro.keypoints)
                kps.push_back(json::array({k.u, k.v}));
            o["keypoints"] = kps;
            rec["objects"].push_back(o);
        }
        ann["images"].push_back(rec);
    }
    write_text(dir / "annotations.json", ann.dump(1));
}

}  // namespace

void make_dataset(const std::string& root, const DatasetGenSpec& spec) {
    fs::path rp(root);
    if (fs::exists(rp) && !fs::is_empty(rp))
        require(spec.force, "dataset: target directory ", root,
                " is not empty (use force to overwrite)");
    fs::create_directories(rp);

    auto models = default_objects();
    CameraIntrinsics cam = default_camera();
    RenderOptions opt = spec.render;
    opt.distractor_prob = spec.distractor_prob;

    json mj;
    mj["objects"] = json::array();
    for (const auto& m : models) {
        json o;
        o["class"] = m.cls;
        o["name"] = m.name;
        o["symmetric"] = m.symmetric;
        o["diameter"] = m.diameter;
        json verts = json::array();
        for (const auto& v : m.vertices) verts.push_back(vec3_json(v));
        o["vertices"] = verts;
        json faces = json::array();
        for (const auto& f : m.faces)
            faces.push_back(json::array({f[0], f[1], f[2]}));
        o["faces"] = faces;
        json sp = json::array();
        for (const auto& p : m.surface_points) sp.push_back(vec3_json(p));
        o["surface_points"] = sp;
        json sym = json::array();
        for (const auto& q : m.symmetry_rotations) sym.push_back(quat_json(q));
        o["symmetry_rotations"] = sym;
        mj["objects"].push_back(o);
    }
    write_text(rp / "models.json", mj.dump(1));

    json meta;
    meta["seed"] = spec.seed;
    meta["n_train"] = spec.n_train;
    meta["n_test"] = spec.n_test;
    meta["width"] = opt.width;
    meta["height"] = opt.height;
    meta["distractor_prob"] = spec.distractor_prob;
    write_text(rp / "meta.json", meta.dump(1));

    Rng master(spec.seed);
    Rng train_rng = master.child(0x7261696e);  // split-tagged streams
    Rng test_rng = master.child(0x74657374);
    write_split(root, "train", models, spec.n_train, cam, opt, train_rng);
    write_split(root, "test", models, spec.n_test, cam, opt, test_rng);
}

std::vector<ObjectModel> load_models(const std::string& root) {
    json mj = load_json(fs::path(root) / "models.json");
    std::vector<ObjectModel> models;
    for (const auto& o : mj.at("objects")) {
        ObjectModel m;
        m.cls = o.at("class");
        m.name = o.at("name");
        m.symmetric = o.at("symmetric");
        m.diameter = o.at("diameter");
        for (const auto& v : o.at("vertices")) m.vertices.push_back(vec3_from(v));
        for (const auto& f : o.at("faces"))
            m.faces.push_back({f.at(0), f.at(1), f.at(2)});
        for (const auto& p : o.at("surface_points"))
            m.surface_points.push_back(vec3_from(p));
        for (const auto& q : o.at("symmetry_rotations"))
            m.symmetry_rotations.push_back(quat_from(q));
        m.bbox_lo = m.bbox_hi = m.vertices.at(0);
        for (const auto& v : m.vertices) {
            m.bbox_lo.x = std::min(m.bbox_lo.x, v.x);
            m.bbox_lo.y = std::min(m.bbox_lo.y, v.y);
            m.bbox_lo.z = std::min(m.bbox_lo.z, v.z);
            m.bbox_hi.x = std::max(m.bbox_hi.x, v.x);
            m.bbox_hi.y = std::max(m.bbox_hi.y, v.y);
            m.bbox_hi.z = std::max(m.bbox_hi.z, v.z);
        }
        models.push_back(std::move(m));
    }
    require(!models.empty(), "dataset: models.json has no objects");
    return models;
}

Dataset load_dataset(const std::string& root, const std::string& split) {
    Dataset ds;
    ds.root = root;
    ds.split = split;
    ds.models = load_models(root);
    fs::path dir = fs::path(root) / split;
    json ann = load_json(dir / "annotations.json");
    ds.width = ann.at("width");
    ds.height = ann.at("height");
    for (const auto& rec : ann.at("images")) {
        SampleAnnotation sa;
        sa.id = rec.at("id");
        sa.file = rec.at("file");
        sa.camera = camera_from(rec.at("camera"));
        for (const auto& o : rec.at("objects")) {
            ObjectAnnotation oa;
            oa.cls = o.at("class");
            oa.pose.q = quat_from(o.at("q"));
            oa.pose.t = vec3_from(o.at("t"));
            const auto& kps = o.at("keypoints");
            require(kps.size() == 9, "dataset: expected 9 keypoints");
            for (int k = 0; k < 9; ++k)
                oa.keypoints[std::size_t(k)] = {kps.at(std::size_t(k)).at(0),
                                                kps.at(std::size_t(k)).at(1)};
            sa.objects.push_back(oa);
        }
        ds.ann.push_back(std::move(sa));
        Image8 img = read_png((dir / ds.ann.back().file).string());
        require(img.w == ds.width && img.h == ds.height,
                "dataset: image size mismatch in ", ds.ann.back().file);
        ds.images.push_back(std::move(img));
        Image8 mask =
            read_png((dir / "masks" / index_name(ds.ann.back().id)).string());
        require(mask.channels == 1, "dataset: mask must be grayscale");
        ds.masks.push_back(mask.pixels);
    }
    return ds;
}

const ObjectModel& Dataset::model_for_class(int cls) const {
    for (const auto& m : models)
        if (m.cls == cls) return m;
    fail("dataset: no model with class ", cls);
}

std::vector<std::size_t> Dataset::indices_of_class(int cls) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ann.size(); ++i)
        if (!ann[i].objects.empty() && ann[i].objects.front().cls == cls)
            out.push_back(i);
    return out;
}

std::string split_image_path(const std::string& root, const std::string& split,
                             int id) {
    return (fs::path(root) / split / "images" / index_name(id)).string();
}

}  // namespace poselab::geom
