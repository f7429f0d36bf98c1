#include "tlv/alignment.hpp"

#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

namespace tlv {

using ag::Mat;
using nlohmann::json;

EmbeddingBatch fuse_text(const EmbeddingBatch& sentence, const EmbeddingBatch& phrase) {
    if (sentence.rows.rows() != phrase.rows.rows() || sentence.rows.cols() != phrase.rows.cols()) {
        throw ShapeError("fuse_text: sentence and phrase embeddings differ in shape");
    }
    const auto s = EmbeddingBatch::normalize(sentence.rows);
    const auto p = EmbeddingBatch::normalize(phrase.rows);
    return EmbeddingBatch::normalize(0.5 * (s.rows + p.rows));
}

double info_nce(const EmbeddingBatch& x, const EmbeddingBatch& y, double tau, bool symmetric) {
    if (x.size() == 0) throw DomainError("info_nce: empty batch");
    if (x.rows.rows() != y.rows.rows() || x.rows.cols() != y.rows.cols()) {
        throw ShapeError("info_nce: x and y differ in shape");
    }
    if (!(tau > 0.0)) throw DomainError("info_nce: temperature must be positive");
    if (!x.normalized || !y.normalized) throw ContractError("info_nce: inputs must be L2-normalized");
    x.validate();
    y.validate();
    return ag::info_nce_kernel(x.rows, y.rows, tau, symmetric, nullptr);
}

// ---------------------------------------------------------------------------
// config

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    schedule.validate();
}

TrainConfig TrainConfig::paper_scale() {
    TrainConfig c;
    c.batch_size = 96;
    c.warmup_steps = 200;
    return c;
}

void to_json(json& j, const CurriculumSchedule& s) {
    j = json{{"beta_1", s.beta_1}, {"beta_min", s.beta_min}, {"total_steps", s.total_steps}, {"enabled", s.enabled}};
}

void from_json(const json& j, CurriculumSchedule& s) {
    s.beta_1 = j.at("beta_1");
    s.beta_min = j.at("beta_min");
    s.total_steps = j.at("total_steps");
    s.enabled = j.at("enabled");
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"base_lr", c.base_lr},
             {"warmup_steps", c.warmup_steps},
             {"adam_beta1", c.adam_beta1},
             {"adam_beta2", c.adam_beta2},
             {"adam_eps", c.adam_eps},
             {"weight_decay", c.weight_decay},
             {"temperature", c.temperature},
             {"seed", c.seed},
             {"symmetric_loss", c.symmetric_loss},
             {"schedule", c.schedule}};
}

void from_json(const json& j, TrainConfig& c) {
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.base_lr = j.at("base_lr");
    c.warmup_steps = j.at("warmup_steps");
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.adam_eps = j.at("adam_eps");
    c.weight_decay = j.at("weight_decay");
    c.temperature = j.at("temperature");
    c.seed = j.at("seed");
    c.symmetric_loss = j.at("symmetric_loss");
    c.schedule = j.at("schedule").get<CurriculumSchedule>();
}

double lr_at_step(const TrainConfig& config, std::int64_t step) {
    const std::int64_t total = config.schedule.total_steps;
    if (step < 0 || step > total) {
        throw DomainError("lr_at_step: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
    }
    const std::int64_t warmup = config.warmup_steps;
    if (warmup > 0 && step < warmup) {
        return config.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (total <= warmup) return config.base_lr;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// optimizer

AdamW::AdamW(std::vector<Parameter*> params, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (auto* p : params_) {
        m_.push_back(Mat::Zero(p->value().rows(), p->value().cols()));
        v_.push_back(Mat::Zero(p->value().rows(), p->value().cols()));
    }
}

void AdamW::zero_grad() {
    for (auto* p : params_) p->var->zero_grad();
}

double AdamW::grad_norm() const {
    double sq = 0.0;
    for (auto* p : params_) {
        if (p->var->grad.size() == p->value().size()) sq += p->var->grad.squaredNorm();
    }
    return std::sqrt(sq);
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        const Mat& g = p.var->grad_buffer();
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        p.value() *= 1.0 - lr * weight_decay_;
        p.value().array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

// ---------------------------------------------------------------------------
// loss

EmbeddingBatch text_targets(const TextEncoder& text, std::span<const Sample* const> batch) {
    std::vector<std::string> sentences;
    std::vector<std::string> phrases;
    for (const auto* s : batch) {
        sentences.push_back(s->sentence_description);
        phrases.push_back(s->joined_phrases());
    }
    return fuse_text(text.encode(sentences), text.encode(phrases));
}

ag::Var training_loss(const EncoderBundle& bundle, std::span<const Sample* const> batch,
                      const EmbeddingBatch& targets, double beta, double tau, bool symmetric) {
    std::vector<const Image*> touch_images;
    std::vector<const Image*> vision_images;
    for (const auto* s : batch) {
        touch_images.push_back(&s->touch_image);
        vision_images.push_back(&s->vision_image);
    }
    ag::Var x = bundle.touch.forward(touch_images);
    if (beta > 0.0) x = ag::mix(bundle.vision.forward(vision_images), x, beta);
    x = ag::l2_normalize_rows(x);
    return ag::info_nce(x, ag::leaf(targets.rows), tau, symmetric);
}

// ---------------------------------------------------------------------------
// trainer

Trainer::Trainer(EncoderBundle& bundle, TrainConfig config)
    : bundle_(bundle),
      config_(std::move(config)),
      optimizer_(trainable_parameters(bundle), config_.adam_beta1, config_.adam_beta2, config_.adam_eps,
                 config_.weight_decay) {
    config_.validate();
    frozen_fingerprint_ = frozen_fingerprint();
}

std::uint64_t Trainer::frozen_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : frozen_parameters(bundle_)) {
        const Mat& v = p->value();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, v.data() + i, sizeof bits);
            h = (h ^ bits) * 0x100000001b3ULL;
        }
    }
    return h;
}

const EmbeddingBatch& Trainer::targets_for(std::span<const Sample* const> batch) {
    // The text tower is frozen, so each sample's fused target is computed once.
    std::vector<const Sample*> missing;
    for (const auto* s : batch) {
        if (!text_cache_.count(s->id)) missing.push_back(s);
    }
    if (!missing.empty()) {
        const EmbeddingBatch fresh = text_targets(bundle_.text, missing);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            text_cache_[missing[i]->id] = fresh.rows.row(static_cast<Eigen::Index>(i));
        }
    }
    batch_targets_.rows.resize(static_cast<Eigen::Index>(batch.size()), bundle_.encoder_config().embed_dim);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        batch_targets_.rows.row(static_cast<Eigen::Index>(i)) = text_cache_.at(batch[i]->id);
    }
    batch_targets_.normalized = true;
    return batch_targets_;
}

StepResult Trainer::step(std::span<const Sample* const> batch, std::int64_t step) {
    if (batch.empty()) throw ValidationError("train_step: empty batch");
    if (step < 0 || step >= config_.schedule.total_steps) {
        throw DomainError("train_step: step " + std::to_string(step) + " outside [0, N)");
    }
    StepResult r;
    r.step = step;
    r.beta = beta_at_step(config_.schedule, step);
    r.lr = lr_at_step(config_, step);

    const EmbeddingBatch& y = targets_for(batch);
    optimizer_.zero_grad();
    ag::Var loss = training_loss(bundle_, batch, y, r.beta, config_.temperature, config_.symmetric_loss);
    r.loss = loss->value(0, 0);
    if (!std::isfinite(r.loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (beta " + std::to_string(r.beta) +
                           ", lr " + std::to_string(r.lr) + ")");
    }
    ag::backward(loss);
    r.grad_norm = optimizer_.grad_norm();
    optimizer_.step(r.lr);
    if (frozen_fingerprint() != frozen_fingerprint_) {
        throw ContractError("frozen parameters changed during step " + std::to_string(step));
    }
    return r;
}

std::int64_t steps_per_epoch(std::size_t train_size, int batch_size) {
    if (train_size == 0) return 0;
    const auto k = static_cast<std::size_t>(batch_size);
    return train_size < k ? 1 : static_cast<std::int64_t>(train_size / k);
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepResult> metrics) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "step,loss,beta,lr,grad_norm\n";
    char buf[160];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g,%.10g,%.10g\n", static_cast<long long>(m.step), m.loss,
                      m.beta, m.lr, m.grad_norm);
        out << buf;
    }
}

TrainResult train(EncoderBundle& bundle, const Dataset& dataset, const DatasetManifest& manifest,
                  const TrainConfig& config, const TrainOptions& options) {
    std::vector<const Sample*> pool;
    for (const auto& id : manifest.split(options.split)) pool.push_back(&dataset.by_id(id));
    if (pool.empty()) throw ValidationError("train: split '" + options.split + "' is empty");

    const std::int64_t spe = steps_per_epoch(pool.size(), config.batch_size);
    TrainConfig cfg = config;
    cfg.schedule.total_steps = std::max<std::int64_t>(1, spe * cfg.epochs);
    cfg.validate();

    TrainResult result;
    result.schedule = cfg.schedule;
    Trainer trainer(bundle, cfg);
    const std::size_t k = std::min(pool.size(), static_cast<std::size_t>(cfg.batch_size));

    std::int64_t global = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<const Sample*> order = pool;
        Rng rng(derive_seed(cfg.seed, "train/shuffle", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span(order));
        for (std::int64_t b = 0; b < spe; ++b, ++global) {
            std::span<const Sample* const> batch(order.data() + b * static_cast<std::int64_t>(k), k);
            StepResult r = trainer.step(batch, global);
            if (options.on_step) options.on_step(r);
            result.metrics.push_back(r);
        }
    }

    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        json meta = options.metadata;
        meta["train_config"] = cfg;
        meta["steps"] = global;
        meta["train_size"] = pool.size();
        result.checkpoint = options.out_dir / "checkpoint.bin";
        result.metrics_csv = options.out_dir / "metrics.csv";
        save_checkpoint(result.checkpoint, bundle, meta);
        write_metrics_csv(result.metrics_csv, result.metrics);
    }
    return result;
}

} // namespace tlv
