// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/pipeline.hpp"
#include "liftrefine/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace liftrefine {

struct DatasetConfig {
    std::uint64_t seed = 0;
    std::int64_t train_scenes = 16;
    std::int64_t val_scenes = 2;
    std::int64_t test_scenes = 2;
    std::int64_t views = 24;
    std::int64_t resolution = 32;
    std::int64_t gt_samples = 128;
    OrbitConfig orbit;
};

struct ManifestEntry {
    std::string id;
    std::filesystem::path pose_file;  ///< relative to the manifest directory
    std::filesystem::path image_dir;  ///< relative to the manifest directory
    std::int64_t view_count = 0;
    std::string split;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> scenes;
};

/// Scene seed for the i-th scene of a dataset.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::int64_t index);

/// Renders one scene's orbit views.
SceneData make_scene_data(std::uint64_t scene_seed, const std::string& split, const DatasetConfig& config);

/// Writes <root>/manifest.txt and per scene <id>/poses.txt plus
/// <id>/images/view_NNN.{pfm,png}. Output bytes depend only on the config.
DatasetManifest generate_dataset(const std::filesystem::path& root, const DatasetConfig& config);

/// Parses manifest lines "id pose_file image_dir view_count split" and checks
/// that every referenced file exists and splits do not share scene ids.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

/// Loads all scenes of `split` (every split when empty).
std::vector<SceneData> load_scenes(const DatasetManifest& manifest, const std::string& split = "");

std::filesystem::path view_image_path(const DatasetManifest& manifest, const ManifestEntry& entry,
                                      std::int64_t view, const std::string& extension);

} // namespace liftrefine
