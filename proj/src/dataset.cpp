// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/dataset.hpp"

#include "liftrefine/error.hpp"
#include "liftrefine/image_io.hpp"
#include "liftrefine/rng.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace liftrefine {

namespace fs = std::filesystem;

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::int64_t index) {
    return mix_seed(dataset_seed, static_cast<std::uint64_t>(index)) % 1000000;
}

SceneData make_scene_data(std::uint64_t seed, const std::string& split, const DatasetConfig& config) {
    const SyntheticScene scene = generate_scene(seed);
    SceneData data;
    data.id = scene.id;
    data.split = split;
    for (const auto& pose : random_orbit(seed, config.views, config.resolution, config.orbit)) {
        data.views.push_back({render_ground_truth(scene, pose, config.gt_samples, seed), pose});
    }
    return data;
}

std::filesystem::path view_image_path(const DatasetManifest& manifest, const ManifestEntry& entry, std::int64_t view,
                                      const std::string& extension) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%03lld.%s", static_cast<long long>(view), extension.c_str());
    return manifest.root / entry.image_dir / name;
}

DatasetManifest generate_dataset(const fs::path& root, const DatasetConfig& config) {
    if (config.train_scenes < 0 || config.val_scenes < 0 || config.test_scenes < 0) {
        throw ValueError("scene counts must be >= 0");
    }
    if (config.views < 1 || config.resolution < 2) throw ValueError("views must be >= 1 and resolution >= 2");
    fs::create_directories(root);
    DatasetManifest manifest;
    manifest.root = root;
    const std::int64_t total = config.train_scenes + config.val_scenes + config.test_scenes;
    std::set<std::string> ids;
    for (std::int64_t i = 0, salt = 0; i < total; ++i) {
        const std::string split =
            i < config.train_scenes ? "train" : (i < config.train_scenes + config.val_scenes ? "val" : "test");
        // Distinct seeds can collide modulo the id range; skip repeats so splits stay disjoint.
        std::uint64_t seed = scene_seed(config.seed, i + salt);
        while (ids.count(generate_scene(seed).id)) seed = scene_seed(config.seed, i + ++salt);
        const SceneData data = make_scene_data(seed, split, config);
        ids.insert(data.id);

        ManifestEntry e;
        e.id = data.id;
        e.pose_file = fs::path(data.id) / "poses.txt";
        e.image_dir = fs::path(data.id) / "images";
        e.view_count = config.views;
        e.split = split;
        fs::create_directories(root / e.image_dir);
        std::vector<CameraPose> poses;
        for (std::size_t v = 0; v < data.views.size(); ++v) {
            poses.push_back(data.views[v].pose);
            const auto k = static_cast<std::int64_t>(v);
            write_pfm(view_image_path(manifest, e, k, "pfm"), data.views[v].image);
            write_png(view_image_path(manifest, e, k, "png"), data.views[v].image);
        }
        write_poses(root / e.pose_file, poses);
        manifest.scenes.push_back(e);
    }
    std::ofstream os(root / "manifest.txt", std::ios::binary);
    if (!os) throw ValueError("cannot write " + (root / "manifest.txt").string());
    for (const auto& e : manifest.scenes) {
        os << e.id << ' ' << e.pose_file.generic_string() << ' ' << e.image_dir.generic_string() << ' ' << e.view_count
           << ' ' << e.split << '\n';
    }
    return manifest;
}

DatasetManifest load_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValueError("cannot read manifest " + manifest_path.string());
    DatasetManifest manifest;
    manifest.root = manifest_path.parent_path();
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string pose_file, image_dir;
        if (!(ls >> e.id >> pose_file >> image_dir >> e.view_count >> e.split) || e.view_count < 1) {
            throw ValueError(manifest_path.string() + ":" + std::to_string(lineno) +
                             ": expected 'id pose_file image_dir view_count split'");
        }
        if (e.split != "train" && e.split != "val" && e.split != "test") {
            throw ValueError(manifest_path.string() + ":" + std::to_string(lineno) + ": unknown split '" + e.split + "'");
        }
        if (!seen.insert(e.id).second) throw ValueError("manifest lists scene " + e.id + " more than once");
        e.pose_file = pose_file;
        e.image_dir = image_dir;
        if (!fs::exists(manifest.root / e.pose_file)) throw ValueError("missing pose file " + (manifest.root / e.pose_file).string());
        for (std::int64_t v = 0; v < e.view_count; ++v) {
            const auto p = view_image_path(manifest, e, v, "pfm");
            if (!fs::exists(p)) throw ValueError("missing image " + p.string());
        }
        manifest.scenes.push_back(e);
    }
    return manifest;
}

std::vector<SceneData> load_scenes(const DatasetManifest& manifest, const std::string& split) {
    std::vector<SceneData> out;
    for (const auto& e : manifest.scenes) {
        if (!split.empty() && e.split != split) continue;
        const auto poses = read_poses(manifest.root / e.pose_file);
        if (static_cast<std::int64_t>(poses.size()) != e.view_count) {
            throw ValueError("scene " + e.id + ": pose file has " + std::to_string(poses.size()) + " poses, manifest says " +
                             std::to_string(e.view_count));
        }
        SceneData s;
        s.id = e.id;
        s.split = e.split;
        for (std::int64_t v = 0; v < e.view_count; ++v) {
            s.views.push_back({read_pfm(view_image_path(manifest, e, v, "pfm")), poses[static_cast<std::size_t>(v)]});
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace liftrefine
