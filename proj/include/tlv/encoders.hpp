#pragma once

#include "tlv/autograd.hpp"
#include "tlv/embedding.hpp"
#include "tlv/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tlv {

struct EncoderConfig {
    int image_size = 32;
    int patch_size = 8;
    int depth = 2;
    int width = 64;
    int heads = 4;
    int embed_dim = 32;
    int text_depth = 2;
    int text_width = 64;
    int text_heads = 4;
    int vocab_size = 4096;
    int max_text_len = 32;
    bool normalize_pixels = true;

    void validate() const;
    int tokens_per_image() const { return (image_size / patch_size) * (image_size / patch_size); }
    int patch_dim() const { return patch_size * patch_size * 3; }
};

struct LoRAConfig {
    int rank = 4;
    double alpha = 8.0;
    // Subset of {"q", "k", "v", "o"}: attention projections to adapt.
    std::vector<std::string> targets{"q", "v"};

    void validate(const EncoderConfig& encoder) const;
    double scaling() const { return alpha / rank; }
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const LoRAConfig& c);
void from_json(const nlohmann::json& j, LoRAConfig& c);

struct Parameter {
    std::string name;
    ag::Var var;
    bool trainable = false;

    const ag::Mat& value() const { return var->value; }
    ag::Mat& value() { return var->value; }
};

// W x + (alpha / r) B (A x), with W m x n, A r x n, B m x r.
Eigen::VectorXd lora_forward(const Eigen::MatrixXd& base_weight, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b, double alpha, const Eigen::VectorXd& x);
// W + (alpha / r) B A
Eigen::MatrixXd lora_merge(const Eigen::MatrixXd& base_weight, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b, double alpha);

class Rng;

namespace nn {

struct LoraAdapter {
    Parameter a;
    Parameter b;
    double scaling = 1.0;
};

class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in, int out, bool with_bias, double init_std, bool trainable, Rng& rng);

    ag::Var forward(const ag::Var& x) const;
    void attach_lora(const LoRAConfig& config, Rng& rng);
    // Folds the adapter into the base weight and drops it.
    void merge_lora();
    bool has_lora() const { return lora_.has_value(); }
    void collect(std::vector<Parameter*>& out);

private:
    Parameter weight_;
    std::optional<Parameter> bias_;
    std::optional<LoraAdapter> lora_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(const std::string& name, int width, bool trainable);
    ag::Var forward(const ag::Var& x) const;
    void collect(std::vector<Parameter*>& out);

private:
    Parameter gamma_;
    Parameter beta_;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(const std::string& name, int width, int heads, bool trainable, Rng& rng);
    ag::Var forward(const ag::Var& x, std::span<const ag::Segment> segments) const;
    void attach_lora(const LoRAConfig& config, Rng& rng);
    void merge_lora();
    void collect(std::vector<Parameter*>& out);

private:
    int heads_ = 1;
    LayerNorm ln1_, ln2_;
    Linear q_, k_, v_, o_;
    Linear fc1_, fc2_;
};

} // namespace nn

// Patch-embedding transformer with mean pooling and a linear projection.
// The same pathway serves touch and vision images.
class ImageEncoder {
public:
    ImageEncoder(std::string name, const EncoderConfig& config, bool trainable, std::uint64_t seed);

    // K images -> K x embed_dim (unnormalized), differentiable.
    ag::Var forward(std::span<const Image* const> images) const;
    EmbeddingBatch encode(std::span<const Image* const> images) const;
    EmbeddingBatch encode(std::span<const Image> images) const;

    void attach_lora(const LoRAConfig& config, std::uint64_t seed);
    void merge_lora();
    bool has_lora() const { return has_lora_; }
    const EncoderConfig& config() const { return config_; }
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

private:
    std::string name_;
    EncoderConfig config_;
    bool has_lora_ = false;
    nn::Linear patch_embed_;
    Parameter pos_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm ln_final_;
    nn::Linear proj_;
};

// Flattens K images into (K * tokens) x patch_dim rows.
ag::Mat patchify(std::span<const Image* const> images, const EncoderConfig& config);

// Whitespace tokenizer over a seeded hash vocabulary. Id 0 is reserved for
// padding, 1 for unknown tokens (anything with non-ASCII characters) and 2
// for the sequence start marker that every sequence begins with.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnknown = 1;
    static constexpr int kStart = 2;

    Tokenizer(int vocab_size, int max_len, std::uint64_t seed);
    // Throws ValidationError on blank input; truncates to max_len ids.
    std::vector<int> encode(std::string_view text) const;
    int max_len() const { return max_len_; }

private:
    int vocab_size_;
    int max_len_;
    std::uint64_t seed_;
};

class TextEncoder {
public:
    TextEncoder(const EncoderConfig& config, bool trainable, std::uint64_t seed);

    ag::Var forward(std::span<const std::string> texts) const;
    EmbeddingBatch encode(std::span<const std::string> texts) const;

    const Tokenizer& tokenizer() const { return tokenizer_; }
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

private:
    EncoderConfig config_;
    Tokenizer tokenizer_;
    Parameter token_embed_;
    Parameter pos_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm ln_final_;
    nn::Linear proj_;
};

using ParameterSnapshot = std::map<std::string, ag::Mat>;

// Touch encoder (all trainable), vision encoder (frozen base plus trainable
// LoRA adapters), text encoder (frozen) and the contrastive temperature.
class EncoderBundle {
public:
    EncoderBundle(const EncoderConfig& encoder, const LoRAConfig& lora, double temperature, std::uint64_t seed);

    EncoderBundle(const EncoderBundle&) = delete;
    EncoderBundle& operator=(const EncoderBundle&) = delete;
    EncoderBundle(EncoderBundle&&) = default;
    EncoderBundle& operator=(EncoderBundle&&) = default;

    ImageEncoder touch;
    ImageEncoder vision;
    TextEncoder text;
    double temperature = 0.07;

    const EncoderConfig& encoder_config() const { return encoder_config_; }
    const LoRAConfig& lora_config() const { return lora_config_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<Parameter*> all_parameters();
    std::vector<const Parameter*> all_parameters() const;
    ParameterSnapshot snapshot() const;
    void restore(const ParameterSnapshot& values);

private:
    EncoderConfig encoder_config_;
    LoRAConfig lora_config_;
    std::uint64_t seed_;
};

// Exactly the touch parameters plus every LoRA A and B.
std::vector<Parameter*> trainable_parameters(EncoderBundle& bundle);
std::vector<const Parameter*> frozen_parameters(const EncoderBundle& bundle);

// Single-file archive: magic, JSON header (configs, temperature, metadata,
// tensor index), then little-endian float64 payloads.
void save_checkpoint(const std::filesystem::path& path, const EncoderBundle& bundle,
                     const nlohmann::json& metadata);
struct LoadedCheckpoint {
    EncoderBundle bundle;
    nlohmann::json metadata;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace tlv
