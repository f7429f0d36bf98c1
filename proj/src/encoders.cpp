#include "tlv/encoders.hpp"

#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace tlv {

using ag::Mat;
using ag::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// embeddings

void EmbeddingBatch::validate() const {
    if (!rows.allFinite()) throw NumericError("embedding batch has non-finite entries");
    if (!normalized) return;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        if (std::abs(rows.row(r).norm() - 1.0) > 1e-6) {
            throw ContractError("row " + std::to_string(r) + " is flagged normalized but has norm " +
                                std::to_string(rows.row(r).norm()));
        }
    }
}

EmbeddingBatch EmbeddingBatch::normalize(const Eigen::MatrixXd& rows) {
    return {ag::l2_normalize_rows(ag::leaf(rows))->value, true};
}

// ---------------------------------------------------------------------------
// configs

void EncoderConfig::validate() const {
    const bool positive = image_size > 0 && patch_size > 0 && depth > 0 && width > 0 && heads > 0 &&
                          embed_dim > 0 && text_depth > 0 && text_width > 0 && text_heads > 0 &&
                          vocab_size > 3 && max_text_len > 1;
    if (!positive) throw ConfigError("encoder config values must be positive");
    if (image_size % patch_size != 0) throw ConfigError("image_size must be divisible by patch_size");
    if (width % heads != 0) throw ConfigError("width must be divisible by heads");
    if (text_width % text_heads != 0) throw ConfigError("text_width must be divisible by text_heads");
}

void LoRAConfig::validate(const EncoderConfig& encoder) const {
    if (rank <= 0) throw ConfigError("lora rank must be positive");
    if (!(alpha > 0.0)) throw ConfigError("lora alpha must be positive");
    if (rank > encoder.width) throw ConfigError("lora rank exceeds the adapted projection size");
    static const std::set<std::string> allowed{"q", "k", "v", "o"};
    for (const auto& t : targets) {
        if (!allowed.count(t)) throw ConfigError("unknown lora target '" + t + "'");
    }
}

void to_json(json& j, const EncoderConfig& c) {
    j = json{{"image_size", c.image_size},   {"patch_size", c.patch_size},     {"depth", c.depth},
             {"width", c.width},             {"heads", c.heads},               {"embed_dim", c.embed_dim},
             {"text_depth", c.text_depth},   {"text_width", c.text_width},     {"text_heads", c.text_heads},
             {"vocab_size", c.vocab_size},   {"max_text_len", c.max_text_len},
             {"normalize_pixels", c.normalize_pixels}};
}

void from_json(const json& j, EncoderConfig& c) {
    c.image_size = j.at("image_size");
    c.patch_size = j.at("patch_size");
    c.depth = j.at("depth");
    c.width = j.at("width");
    c.heads = j.at("heads");
    c.embed_dim = j.at("embed_dim");
    c.text_depth = j.at("text_depth");
    c.text_width = j.at("text_width");
    c.text_heads = j.at("text_heads");
    c.vocab_size = j.at("vocab_size");
    c.max_text_len = j.at("max_text_len");
    c.normalize_pixels = j.at("normalize_pixels");
}

void to_json(json& j, const LoRAConfig& c) {
    j = json{{"rank", c.rank}, {"alpha", c.alpha}, {"targets", c.targets}};
}

void from_json(const json& j, LoRAConfig& c) {
    c.rank = j.at("rank");
    c.alpha = j.at("alpha");
    c.targets = j.at("targets").get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------
// LoRA primitives

Eigen::VectorXd lora_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             double alpha, const Eigen::VectorXd& x) {
    const auto r = a.rows();
    if (r == 0 || a.cols() != w.cols() || b.rows() != w.rows() || b.cols() != r || x.size() != w.cols()) {
        throw ShapeError("lora_forward: expected W m x n, A r x n, B m x r, x n");
    }
    return w * x + (alpha / static_cast<double>(r)) * (b * (a * x));
}

Eigen::MatrixXd lora_merge(const Eigen::MatrixXd& w, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           double alpha) {
    const auto r = a.rows();
    if (r == 0 || a.cols() != w.cols() || b.rows() != w.rows() || b.cols() != r) {
        throw ShapeError("lora_merge: expected W m x n, A r x n, B m x r");
    }
    return w + (alpha / static_cast<double>(r)) * (b * a);
}

// ---------------------------------------------------------------------------
// layers

namespace {

Mat random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal(0.0, stddev);
    }
    return m;
}

Parameter make_param(std::string name, Mat value, bool trainable) {
    return Parameter{std::move(name), ag::leaf(std::move(value), trainable), trainable};
}

} // namespace

namespace nn {

Linear::Linear(const std::string& name, int in, int out, bool with_bias, double init_std, bool trainable, Rng& rng)
    : weight_(make_param(name + ".weight", random_normal(out, in, init_std, rng), trainable)) {
    if (with_bias) bias_ = make_param(name + ".bias", Mat::Zero(1, out), trainable);
}

Var Linear::forward(const Var& x) const {
    Var y = ag::linear(x, weight_.var, bias_ ? bias_->var : nullptr);
    if (!lora_) return y;
    Var down = ag::matmul_nt(x, lora_->a.var);
    Var up = ag::matmul_nt(down, lora_->b.var);
    return ag::add(y, ag::scale(up, lora_->scaling));
}

void Linear::attach_lora(const LoRAConfig& config, Rng& rng) {
    const auto out = weight_.value().rows();
    const auto in = weight_.value().cols();
    if (config.rank > std::min(out, in)) throw ConfigError("lora rank exceeds " + weight_.name + " dimensions");
    const std::string base = weight_.name.substr(0, weight_.name.size() - std::strlen(".weight"));
    lora_ = LoraAdapter{make_param(base + ".lora_a", random_normal(config.rank, in, 0.02, rng), true),
                        make_param(base + ".lora_b", Mat::Zero(out, config.rank), true), config.scaling()};
}

void Linear::merge_lora() {
    if (!lora_) return;
    weight_.value() += lora_->scaling * (lora_->b.value() * lora_->a.value());
    lora_.reset();
}

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
    if (lora_) {
        out.push_back(&lora_->a);
        out.push_back(&lora_->b);
    }
}

LayerNorm::LayerNorm(const std::string& name, int width, bool trainable)
    : gamma_(make_param(name + ".gamma", Mat::Ones(1, width), trainable)),
      beta_(make_param(name + ".beta", Mat::Zero(1, width), trainable)) {}

Var LayerNorm::forward(const Var& x) const {
    return ag::layer_norm(x, gamma_.var, beta_.var);
}

void LayerNorm::collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

TransformerBlock::TransformerBlock(const std::string& name, int width, int heads, bool trainable, Rng& rng)
    : heads_(heads),
      ln1_(name + ".ln1", width, trainable),
      ln2_(name + ".ln2", width, trainable),
      q_(name + ".attn.q", width, width, true, 0.02, trainable, rng),
      k_(name + ".attn.k", width, width, true, 0.02, trainable, rng),
      v_(name + ".attn.v", width, width, true, 0.02, trainable, rng),
      o_(name + ".attn.o", width, width, true, 0.02, trainable, rng),
      fc1_(name + ".mlp.fc1", width, 4 * width, true, 0.02, trainable, rng),
      fc2_(name + ".mlp.fc2", 4 * width, width, true, 0.02, trainable, rng) {}

Var TransformerBlock::forward(const Var& x, std::span<const ag::Segment> segments) const {
    Var h = ln1_.forward(x);
    Var attn = ag::attention(q_.forward(h), k_.forward(h), v_.forward(h), segments, heads_);
    Var x1 = ag::add(x, o_.forward(attn));
    Var m = fc2_.forward(ag::gelu(fc1_.forward(ln2_.forward(x1))));
    return ag::add(x1, m);
}

void TransformerBlock::attach_lora(const LoRAConfig& config, Rng& rng) {
    for (const auto& t : config.targets) {
        if (t == "q") q_.attach_lora(config, rng);
        if (t == "k") k_.attach_lora(config, rng);
        if (t == "v") v_.attach_lora(config, rng);
        if (t == "o") o_.attach_lora(config, rng);
    }
}

void TransformerBlock::merge_lora() {
    q_.merge_lora();
    k_.merge_lora();
    v_.merge_lora();
    o_.merge_lora();
}

void TransformerBlock::collect(std::vector<Parameter*>& out) {
    ln1_.collect(out);
    q_.collect(out);
    k_.collect(out);
    v_.collect(out);
    o_.collect(out);
    ln2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
}

} // namespace nn

// ---------------------------------------------------------------------------
// image encoder

namespace {

constexpr double kPixelMean[3] = {0.48145466, 0.4578275, 0.40821073};
constexpr double kPixelStd[3] = {0.26862954, 0.26130258, 0.27577711};

template <typename T>
std::vector<const Parameter*> to_const_params(const std::vector<T*>& in) {
    return {in.begin(), in.end()};
}

} // namespace

Mat patchify(std::span<const Image* const> images, const EncoderConfig& config) {
    const int p = config.patch_size;
    const int grid = config.image_size / p;
    const int tokens = grid * grid;
    Mat out(static_cast<Eigen::Index>(images.size()) * tokens, config.patch_dim());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = *images[i];
        if (img.height != config.image_size || img.width != config.image_size) {
            throw ShapeError("image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                             ", encoder expects " + std::to_string(config.image_size) + "x" +
                             std::to_string(config.image_size));
        }
        for (int gy = 0; gy < grid; ++gy) {
            for (int gx = 0; gx < grid; ++gx) {
                const Eigen::Index row = static_cast<Eigen::Index>(i) * tokens + gy * grid + gx;
                Eigen::Index col = 0;
                for (int py = 0; py < p; ++py) {
                    for (int px = 0; px < p; ++px) {
                        for (int c = 0; c < 3; ++c) {
                            const double v = img.at(gy * p + py, gx * p + px, c) / 255.0;
                            out(row, col++) = config.normalize_pixels ? (v - kPixelMean[c]) / kPixelStd[c] : v;
                        }
                    }
                }
            }
        }
    }
    return out;
}

ImageEncoder::ImageEncoder(std::string name, const EncoderConfig& config, bool trainable, std::uint64_t seed)
    : name_(std::move(name)), config_(config) {
    config_.validate();
    Rng rng(derive_seed(seed, name_));
    patch_embed_ = nn::Linear(name_ + ".patch_embed", config_.patch_dim(), config_.width, true, 0.02, trainable, rng);
    pos_ = make_param(name_ + ".pos", random_normal(config_.tokens_per_image(), config_.width, 0.02, rng), trainable);
    for (int l = 0; l < config_.depth; ++l) {
        blocks_.emplace_back(name_ + ".blocks." + std::to_string(l), config_.width, config_.heads, trainable, rng);
    }
    ln_final_ = nn::LayerNorm(name_ + ".ln_final", config_.width, trainable);
    proj_ = nn::Linear(name_ + ".proj", config_.width, config_.embed_dim, false,
                       1.0 / std::sqrt(static_cast<double>(config_.width)), trainable, rng);
}

Var ImageEncoder::forward(std::span<const Image* const> images) const {
    if (images.empty()) throw ValidationError("encode_image: empty batch");
    const auto segments = ag::uniform_segments(static_cast<Eigen::Index>(images.size()), config_.tokens_per_image());
    Var x = patch_embed_.forward(ag::leaf(patchify(images, config_)));
    x = ag::add_positional(x, pos_.var, segments);
    for (const auto& block : blocks_) x = block.forward(x, segments);
    x = ln_final_.forward(x);
    return proj_.forward(ag::segment_mean(x, segments));
}

EmbeddingBatch ImageEncoder::encode(std::span<const Image* const> images) const {
    EmbeddingBatch out{forward(images)->value, false};
    out.validate();
    return out;
}

EmbeddingBatch ImageEncoder::encode(std::span<const Image> images) const {
    std::vector<const Image*> ptrs;
    for (const auto& img : images) ptrs.push_back(&img);
    return encode(std::span<const Image* const>(ptrs));
}

void ImageEncoder::attach_lora(const LoRAConfig& config, std::uint64_t seed) {
    config.validate(config_);
    Rng rng(derive_seed(seed, name_ + "/lora"));
    for (auto& block : blocks_) block.attach_lora(config, rng);
    has_lora_ = true;
}

void ImageEncoder::merge_lora() {
    for (auto& block : blocks_) block.merge_lora();
    has_lora_ = false;
}

std::vector<Parameter*> ImageEncoder::parameters() {
    std::vector<Parameter*> out;
    patch_embed_.collect(out);
    out.push_back(&pos_);
    for (auto& block : blocks_) block.collect(out);
    ln_final_.collect(out);
    proj_.collect(out);
    return out;
}

std::vector<const Parameter*> ImageEncoder::parameters() const {
    return to_const_params(const_cast<ImageEncoder*>(this)->parameters());
}

// ---------------------------------------------------------------------------
// text

Tokenizer::Tokenizer(int vocab_size, int max_len, std::uint64_t seed)
    : vocab_size_(vocab_size), max_len_(max_len), seed_(seed) {}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids{kStart};
    std::string word;
    bool saw_word = false;
    auto flush = [&] {
        // Trim punctuation at both ends; keep inner apostrophes and hyphens.
        std::size_t b = 0, e = word.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(word[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(word[e - 1]))) --e;
        std::string token = word.substr(b, e - b);
        word.clear();
        if (token.empty()) return;
        saw_word = true;
        if (static_cast<int>(ids.size()) >= max_len_) return;
        const bool ascii = std::all_of(token.begin(), token.end(), [](char c) {
            return static_cast<unsigned char>(c) < 0x80;
        });
        if (!ascii) {
            ids.push_back(kUnknown);
            return;
        }
        for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        ids.push_back(3 + static_cast<int>(derive_seed(seed_, token) % static_cast<std::uint64_t>(vocab_size_ - 3)));
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            word.push_back(c);
        }
    }
    flush();
    if (!saw_word) throw ValidationError("encode_text: empty or punctuation-only string");
    return ids;
}

TextEncoder::TextEncoder(const EncoderConfig& config, bool trainable, std::uint64_t seed)
    : config_(config), tokenizer_(config.vocab_size, config.max_text_len, derive_seed(seed, "text/vocab")) {
    config_.validate();
    Rng rng(derive_seed(seed, "text"));
    token_embed_ = make_param("text.token_embed", random_normal(config_.vocab_size, config_.text_width, 0.02, rng),
                              trainable);
    pos_ = make_param("text.pos", random_normal(config_.max_text_len, config_.text_width, 0.01, rng), trainable);
    for (int l = 0; l < config_.text_depth; ++l) {
        blocks_.emplace_back("text.blocks." + std::to_string(l), config_.text_width, config_.text_heads, trainable,
                             rng);
    }
    ln_final_ = nn::LayerNorm("text.ln_final", config_.text_width, trainable);
    proj_ = nn::Linear("text.proj", config_.text_width, config_.embed_dim, false,
                       1.0 / std::sqrt(static_cast<double>(config_.text_width)), trainable, rng);
}

Var TextEncoder::forward(std::span<const std::string> texts) const {
    if (texts.empty()) throw ValidationError("encode_text: empty batch");
    std::vector<int> ids;
    std::vector<ag::Segment> segments;
    for (const auto& t : texts) {
        auto tok = tokenizer_.encode(t);
        segments.push_back({static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(tok.size())});
        ids.insert(ids.end(), tok.begin(), tok.end());
    }
    Var x = ag::embedding(token_embed_.var, ids);
    x = ag::add_positional(x, pos_.var, segments);
    for (const auto& block : blocks_) x = block.forward(x, segments);
    x = ln_final_.forward(x);
    return proj_.forward(ag::segment_mean(x, segments));
}

EmbeddingBatch TextEncoder::encode(std::span<const std::string> texts) const {
    EmbeddingBatch out{forward(texts)->value, false};
    out.validate();
    return out;
}

std::vector<Parameter*> TextEncoder::parameters() {
    std::vector<Parameter*> out{&token_embed_, &pos_};
    for (auto& block : blocks_) block.collect(out);
    ln_final_.collect(out);
    proj_.collect(out);
    return out;
}

std::vector<const Parameter*> TextEncoder::parameters() const {
    return to_const_params(const_cast<TextEncoder*>(this)->parameters());
}

// ---------------------------------------------------------------------------
// bundle

EncoderBundle::EncoderBundle(const EncoderConfig& encoder, const LoRAConfig& lora, double temp, std::uint64_t seed)
    : touch("touch", encoder, true, seed),
      vision("vision", encoder, false, seed),
      text(encoder, false, seed),
      temperature(temp),
      encoder_config_(encoder),
      lora_config_(lora),
      seed_(seed) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    vision.attach_lora(lora, seed);
}

std::vector<Parameter*> EncoderBundle::all_parameters() {
    std::vector<Parameter*> out = touch.parameters();
    for (auto* p : vision.parameters()) out.push_back(p);
    for (auto* p : text.parameters()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> EncoderBundle::all_parameters() const {
    return to_const_params(const_cast<EncoderBundle*>(this)->all_parameters());
}

ParameterSnapshot EncoderBundle::snapshot() const {
    ParameterSnapshot out;
    for (const auto* p : all_parameters()) out[p->name] = p->value();
    return out;
}

void EncoderBundle::restore(const ParameterSnapshot& values) {
    for (auto* p : all_parameters()) {
        auto it = values.find(p->name);
        if (it == values.end()) throw LoadError("missing parameter '" + p->name + "'");
        if (it->second.rows() != p->value().rows() || it->second.cols() != p->value().cols()) {
            throw LoadError("parameter '" + p->name + "' has the wrong shape");
        }
        p->value() = it->second;
    }
}

std::vector<Parameter*> trainable_parameters(EncoderBundle& bundle) {
    std::vector<Parameter*> out;
    for (auto* p : bundle.all_parameters()) {
        if (p->trainable) out.push_back(p);
    }
    return out;
}

std::vector<const Parameter*> frozen_parameters(const EncoderBundle& bundle) {
    std::vector<const Parameter*> out;
    for (const auto* p : bundle.all_parameters()) {
        if (!p->trainable) out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

constexpr char kMagic[8] = {'T', 'L', 'V', 'C', 'K', 'P', 'T', '1'};

} // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderBundle& bundle, const json& metadata) {
    json header;
    header["encoder"] = bundle.encoder_config();
    header["lora"] = bundle.lora_config();
    header["temperature"] = bundle.temperature;
    header["seed"] = bundle.seed();
    header["metadata"] = metadata;
    json tensors = json::array();
    std::uint64_t offset = 0;
    const auto params = bundle.all_parameters();
    for (const auto* p : params) {
        tensors.push_back({{"name", p->name},
                           {"rows", p->value().rows()},
                           {"cols", p->value().cols()},
                           {"offset", offset},
                           {"trainable", p->trainable}});
        offset += static_cast<std::uint64_t>(p->value().size());
    }
    header["tensors"] = tensors;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : params) {
        // Row-major payload independent of Eigen's storage order.
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p->value();
        out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("checkpoint not found: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw LoadError("not a checkpoint: " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw LoadError("truncated checkpoint header");

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("corrupt checkpoint header: ") + e.what());
    }
    const EncoderConfig enc = header.at("encoder").get<EncoderConfig>();
    const LoRAConfig lora = header.at("lora").get<LoRAConfig>();
    EncoderBundle bundle(enc, lora, header.at("temperature").get<double>(), header.at("seed").get<std::uint64_t>());

    const std::streamoff payload = in.tellg();
    ParameterSnapshot values;
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto offset = t.at("offset").get<std::uint64_t>();
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
        in.seekg(payload + static_cast<std::streamoff>(offset * sizeof(double)));
        in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
        if (!in) throw LoadError("truncated checkpoint payload");
        values[t.at("name").get<std::string>()] = rm;
    }
    bundle.restore(values);
    return {std::move(bundle), header.at("metadata")};
}

} // namespace tlv
