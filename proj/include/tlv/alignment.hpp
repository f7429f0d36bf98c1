#pragma once

#include "tlv/curriculum.hpp"
#include "tlv/data_model.hpp"
#include "tlv/embedding.hpp"
#include "tlv/encoders.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tlv {

// Normalize each input row-wise, average, renormalize.
EmbeddingBatch fuse_text(const EmbeddingBatch& sentence, const EmbeddingBatch& phrase);

// Mean over the batch of -log softmax_j(x_i . y_j / tau) at j = i. Inputs must
// be flagged normalized.
double info_nce(const EmbeddingBatch& x, const EmbeddingBatch& y, double tau, bool symmetric = false);

struct TrainConfig {
    int batch_size = 16;
    int epochs = 12;
    double base_lr = 2e-4;
    int warmup_steps = 20;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-6;
    double weight_decay = 0.01;
    double temperature = 0.07;
    std::uint64_t seed = 0;
    bool symmetric_loss = false;
    // total_steps is overwritten by train() with steps_per_epoch * epochs.
    CurriculumSchedule schedule;

    void validate() const;
    // Batch 96, warmup 200: the full-scale setting the toy defaults shrink.
    static TrainConfig paper_scale();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const CurriculumSchedule& s);
void from_json(const nlohmann::json& j, CurriculumSchedule& s);

// Linear warmup to base_lr, then cosine decay to 0 at schedule.total_steps.
double lr_at_step(const TrainConfig& config, std::int64_t step);

// Adam with decoupled weight decay over an explicit parameter list.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, double beta1, double beta2, double eps, double weight_decay);

    void zero_grad();
    void step(double lr);
    double grad_norm() const;
    const std::vector<Parameter*>& parameters() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<ag::Mat> m_;
    std::vector<ag::Mat> v_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
};

// Fused sentence/phrase embeddings for each sample, from the frozen text tower.
EmbeddingBatch text_targets(const TextEncoder& text, std::span<const Sample* const> batch);

// Differentiable end-to-end loss for one batch at a given teacher weight.
ag::Var training_loss(const EncoderBundle& bundle, std::span<const Sample* const> batch,
                      const EmbeddingBatch& targets, double beta, double tau, bool symmetric);

struct StepResult {
    std::int64_t step = 0;
    double loss = 0.0;
    double beta = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

class Trainer {
public:
    // config.schedule.total_steps must already hold N.
    Trainer(EncoderBundle& bundle, TrainConfig config);

    // One optimizer step on `batch` at step index `step` (< N).
    StepResult step(std::span<const Sample* const> batch, std::int64_t step);

    const TrainConfig& config() const { return config_; }
    EncoderBundle& bundle() { return bundle_; }

private:
    const EmbeddingBatch& targets_for(std::span<const Sample* const> batch);
    std::uint64_t frozen_fingerprint() const;

    EncoderBundle& bundle_;
    TrainConfig config_;
    AdamW optimizer_;
    std::unordered_map<std::string, Eigen::RowVectorXd> text_cache_;
    EmbeddingBatch batch_targets_;
    std::uint64_t frozen_fingerprint_;
};

std::int64_t steps_per_epoch(std::size_t train_size, int batch_size);

struct TrainOptions {
    std::string split = "train";
    // When set, the final checkpoint and metrics.csv are written here.
    std::filesystem::path out_dir;
    nlohmann::json metadata = nlohmann::json::object();
    std::function<void(const StepResult&)> on_step;
};

struct TrainResult {
    std::vector<StepResult> metrics;
    CurriculumSchedule schedule;
    std::filesystem::path checkpoint;
    std::filesystem::path metrics_csv;
};

// Runs epochs x steps_per_epoch steps with a seeded shuffle per epoch. The
// manifest decides which ids form the training split.
TrainResult train(EncoderBundle& bundle, const Dataset& dataset, const DatasetManifest& manifest,
                  const TrainConfig& config, const TrainOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepResult> metrics);

} // namespace tlv
