#pragma once

#include "tlv/config.hpp"
#include "tlv/data_model.hpp"
#include "tlv/embedding.hpp"
#include "tlv/encoders.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tlv {

enum class Task { material, hard_soft, rough_smooth, grasp };
enum class Protocol { linear_probe, zero_shot };

std::string to_string(Task task);
std::string to_string(Protocol protocol);
Task parse_task(std::string_view name);

struct EvalReport {
    Task task = Task::material;
    Protocol protocol = Protocol::linear_probe;
    double accuracy = 0.0;
    // confusion[truth][predicted]
    std::vector<std::vector<std::int64_t>> confusion;
    std::string checkpoint;
    std::string split;
    std::uint64_t seed = 0;

    std::int64_t total() const;
    std::int64_t correct() const;
};

// Builds the confusion matrix and derives accuracy from its trace.
EvalReport make_report(Task task, Protocol protocol, std::span<const int> truth, std::span<const int> predicted,
                       int num_classes);
nlohmann::json to_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// linear probe

struct ProbeOptions {
    double l2 = 1e-4;
    double grad_tolerance = 1e-6;
    int max_iterations = 5000;
    std::uint64_t seed = 0;
};

// Multinomial logistic regression (weights plus bias) fitted with L-BFGS.
class LinearProbe {
public:
    static LinearProbe fit(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                           const ProbeOptions& options = {});

    std::vector<int> predict(const Eigen::MatrixXd& features) const;
    double final_grad_norm() const { return grad_norm_; }
    int iterations() const { return iterations_; }

private:
    Eigen::MatrixXd weights_; // classes x (d + 1)
    double grad_norm_ = 0.0;
    int iterations_ = 0;
};

// Fits on the train embeddings, reports accuracy on the test embeddings.
// Throws DegenerateDataError when the training labels hold a single class.
EvalReport linear_probe(const EmbeddingBatch& train, std::span<const int> train_labels, const EmbeddingBatch& test,
                        std::span<const int> test_labels, int num_classes, Task task,
                        const ProbeOptions& options = {});

// ---------------------------------------------------------------------------
// zero-shot

struct PromptTemplateSet {
    std::vector<std::string> templates;
    std::vector<std::string> labels;

    void validate() const;
    static PromptTemplateSet defaults(std::vector<std::string> labels);
};

// One row per class: mean of normalized template embeddings, renormalized.
EmbeddingBatch class_prompt_embeddings(const PromptTemplateSet& prompts, const TextEncoder& text);

// Cosine argmax; ties go to the lowest class index.
int zero_shot_classify(const Eigen::VectorXd& touch_embedding, const EmbeddingBatch& class_embeddings);
int zero_shot_classify(const Eigen::VectorXd& touch_embedding, const PromptTemplateSet& prompts,
                       const TextEncoder& text);

// ---------------------------------------------------------------------------
// grasp pooling

// Arithmetic mean of exactly four frame embeddings, renormalized.
Eigen::VectorXd pool_grasp(std::span<const Eigen::VectorXd> frames);

// ---------------------------------------------------------------------------
// protocol runners

int task_label(const Sample& sample, Task task);
int task_num_classes(Task task, const DatasetManifest& manifest);
std::vector<std::string> zero_shot_labels(Task task, const DatasetManifest& manifest);

// Normalized touch embeddings for the samples (grasp samples are pooled
// over their four frames when `pooled_grasp` is set).
EmbeddingBatch touch_embeddings(const ImageEncoder& touch, std::span<const Sample* const> samples,
                                bool pooled_grasp = false, std::size_t chunk = 64);
// Concatenation of the four normalized frame embeddings (probe-only variant).
EmbeddingBatch grasp_concat_embeddings(const ImageEncoder& touch, std::span<const Sample* const> samples);

struct EvalOptions {
    std::string probe_split = "train";
    std::string eval_split = "test";
    std::string checkpoint_id;
    std::uint64_t seed = 0;
    bool grasp_concat = false;
    ProbeOptions probe;
};

EvalReport evaluate(const EncoderBundle& bundle, const Dataset& dataset, Task task, Protocol protocol,
                    const EvalOptions& options = {});

// Uniform random predictions scored through make_report.
EvalReport chance_report(Task task, std::span<const int> truth, int num_classes, std::uint64_t seed);

// Top-1 touch-to-text retrieval within consecutive batches of the samples.
double in_batch_retrieval(const EncoderBundle& bundle, std::span<const Sample* const> samples, int batch_size);

// ---------------------------------------------------------------------------
// report tables

// Rows: Chance, then one Linear Probing and one Zero-Shot row per model.
struct BenchmarkRow {
    std::string model;
    std::optional<EvalReport> material, hard_soft, rough_smooth, grasp;
};
std::string format_benchmark_table(const std::vector<BenchmarkRow>& linear_probe,
                                   const std::vector<BenchmarkRow>& zero_shot, int material_classes);

struct ScaleRow {
    double fraction = 1.0;
    std::size_t train_size = 0;
    std::vector<std::string> train_ids;
    EvalReport material_probe;
    EvalReport material_zero_shot;
    std::optional<EvalReport> grasp_probe;
    std::optional<EvalReport> grasp_zero_shot;
};

struct ScaleAblation {
    std::string dataset_name;
    std::vector<ScaleRow> rows;

    std::string format_table() const;
    nlohmann::json to_json() const;
};

// One model per fraction, each trained from the same seed on a nested
// subsample, all evaluated on the same eval split.
ScaleAblation run_scale_ablation(const Dataset& dataset, const Dataset* grasp, const RunConfig& config,
                                 std::span<const double> fractions = kScaleFractions);

struct CurriculumAblation {
    std::vector<StepResult> with_metrics;
    std::vector<StepResult> without_metrics;
    BenchmarkRow with_probe, without_probe, with_zero_shot, without_zero_shot;

    std::string format_table() const;
    nlohmann::json to_json() const;
};

// Paired runs identical except for schedule.enabled.
CurriculumAblation run_curriculum_ablation(const Dataset& dataset, const Dataset* grasp, const RunConfig& config,
                                           const std::filesystem::path& out_dir = {});

// Trains a bundle on the configured data (no files written).
struct TrainedModel {
    EncoderBundle bundle;
    TrainResult result;
};
TrainedModel train_model(const Dataset& dataset, const DatasetManifest& manifest, const RunConfig& config,
                         const std::filesystem::path& out_dir = {});

BenchmarkRow evaluate_all(const EncoderBundle& bundle, const Dataset& dataset, const Dataset* grasp,
                          Protocol protocol, const EvalOptions& options, const std::string& model_name);

// ---------------------------------------------------------------------------
// 2-D projection

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 0.0; // <= 0 picks max(n / 48, 50)
    std::uint64_t seed = 0;
};

// Exact t-SNE. Requires n >= 10.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& embeddings, const TsneOptions& options = {});
void write_projection_csv(const std::filesystem::path& path, const Eigen::MatrixXd& coords,
                          std::span<const int> labels);
void write_scatter_png(const std::filesystem::path& path, const Eigen::MatrixXd& coords,
                       std::span<const int> labels, int size = 480);

} // namespace tlv
