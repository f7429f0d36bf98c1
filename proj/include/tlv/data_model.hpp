#pragma once

#include "tlv/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tlv {

// hard_soft: 0 = hard, 1 = soft. rough_smooth: 0 = rough, 1 = smooth.
struct Labels {
    int material = 0;
    int hard_soft = 0;
    int rough_smooth = 0;

    bool operator==(const Labels&) const = default;
};

inline constexpr std::array<std::string_view, 2> kHardSoftNames{"hard", "soft"};
inline constexpr std::array<std::string_view, 2> kRoughSmoothNames{"rough", "smooth"};
inline constexpr std::array<std::string_view, 2> kGraspNames{"failed", "successful"};

// Frame order: before-left, before-right, after-left, after-right.
using GraspFrames = std::array<Image, 4>;

struct Sample {
    std::string id;
    Image touch_image;
    Image vision_image;
    std::string sentence_description;
    std::vector<std::string> phrase_descriptions;
    Labels labels;
    std::optional<GraspFrames> grasp_frames;
    std::optional<int> grasp_success;
    std::optional<std::string> corruption_tag;

    // Phrase-level descriptions as fed to the text encoder.
    std::string joined_phrases() const;

    bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<std::string> class_names;
    std::map<std::string, std::vector<std::string>> splits;
    std::uint64_t seed = 0;
    std::size_t size = 0;
    // id -> injected defect kind, for filter-recall checks on synthetic data.
    std::map<std::string, std::string> corruptions;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    const std::vector<std::string>& split(const std::string& name) const;

    bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;

    const Sample& by_id(const std::string& id) const;
    std::vector<const Sample*> split_samples(const std::string& split) const;
    void reindex();

private:
    std::unordered_map<std::string, std::size_t> index_;
};

// Throws SchemaError naming the id and field on the first violated invariant.
void validate_sample(const Sample& sample, int num_classes);
// Checks split disjointness, id existence and size.
void validate_manifest(const DatasetManifest& manifest, const std::vector<Sample>& samples);

// `path` is either a dataset directory holding manifest.json and
// records.jsonl, or the manifest file itself. Records are returned in file
// order.
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Per-class vocabulary for the synthetic generator and the mock judge.
struct MaterialClass {
    std::string name;
    bool hard = true;
    bool rough = true;
    std::vector<std::string> attributes;
};

// Lexicon of 20 material classes; the first M are used for an M-class dataset.
const std::vector<MaterialClass>& material_lexicon();
std::vector<std::string> attribute_words(int material);

struct SyntheticConfig {
    int num_classes = 4;
    int num_samples = 256;
    int height = 32;
    int width = 32;
    std::uint64_t seed = 0;
    double corruption_rate = 0.0;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    std::string name = "synthetic";
};

void validate(const SyntheticConfig& config);
Dataset generate_synthetic(const SyntheticConfig& config);

struct GraspConfig {
    int num_materials = 8;
    int num_samples = 128;
    int height = 32;
    int width = 32;
    std::uint64_t seed = 0;
    std::string name = "grasp";
};

// Four-frame grasp samples. Success is keyed to whether at least one finger
// rests on a rough material; failed grasps lose contact in the after frames.
// Splits are 8:1:1 by object (material pair).
Dataset generate_grasp(const GraspConfig& config);

// Seeded nested subsample of the train split; other splits untouched.
DatasetManifest subsample(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

inline constexpr std::array<double, 4> kScaleFractions{0.25, 0.5, 0.75, 1.0};

} // namespace tlv
