#include "tlv/config.hpp"

#include "tlv/error.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace tlv {

using nlohmann::json;

void RunConfig::validate() const {
    model.validate();
    lora.validate(model);
    train.validate();
}

namespace {

class Table {
public:
    Table(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!table_) return;
        const toml::node* node = table_->get(key);
        if (!node) return;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = node->value<bool>();
            if (!v) fail(key, "expected a boolean");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = node->value<std::int64_t>();
            if (!v || !node->is_integer()) fail(key, "expected an integer");
            out = static_cast<T>(*v);
        } else if constexpr (std::is_floating_point_v<T>) {
            auto v = node->value<double>();
            if (!v) fail(key, "expected a number");
            out = *v;
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = node->value<std::string>();
            if (!v) fail(key, "expected a string");
            out = *v;
        } else {
            const toml::array* arr = node->as_array();
            if (!arr) fail(key, "expected an array of strings");
            out.clear();
            for (const auto& item : *arr) {
                auto v = item.value<std::string>();
                if (!v) fail(key, "expected an array of strings");
                out.push_back(*v);
            }
        }
    }

    void reject_unknown() const {
        if (!table_) return;
        for (const auto& [key, value] : *table_) {
            if (!seen_.count(std::string(key.str()))) {
                throw ConfigError("unknown key [" + name_ + "]." + std::string(key.str()));
            }
        }
    }

private:
    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError("[" + name_ + "]." + key + ": " + what);
    }

    const toml::table* table_;
    std::string name_;
    std::set<std::string> seen_;
};

} // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config parse error: " << e.description() << " at " << e.source().begin;
        throw ConfigError(msg.str());
    }
    for (const auto& [key, value] : root) {
        const std::string k(key.str());
        if (k != "data" && k != "model" && k != "train") throw ConfigError("unknown config section '" + k + "'");
        if (!value.is_table()) throw ConfigError("config entry '" + k + "' must be a table");
    }

    RunConfig c;
    Table data(root["data"].as_table(), "data");
    std::string path, grasp_path;
    data.read("path", path);
    data.read("grasp_path", grasp_path);
    data.read("probe_split", c.data.probe_split);
    data.read("eval_split", c.data.eval_split);
    data.reject_unknown();
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        std::filesystem::path fp(p);
        return fp.is_absolute() || base_dir.empty() ? fp : base_dir / fp;
    };
    c.data.path = resolve(path);
    c.data.grasp_path = resolve(grasp_path);

    Table model(root["model"].as_table(), "model");
    model.read("image_size", c.model.image_size);
    model.read("patch_size", c.model.patch_size);
    model.read("depth", c.model.depth);
    model.read("width", c.model.width);
    model.read("heads", c.model.heads);
    model.read("embed_dim", c.model.embed_dim);
    model.read("text_depth", c.model.text_depth);
    model.read("text_width", c.model.text_width);
    model.read("text_heads", c.model.text_heads);
    model.read("vocab_size", c.model.vocab_size);
    model.read("max_text_len", c.model.max_text_len);
    model.read("normalize_pixels", c.model.normalize_pixels);
    model.read("lora_rank", c.lora.rank);
    model.read("lora_alpha", c.lora.alpha);
    model.read("lora_targets", c.lora.targets);
    model.reject_unknown();

    Table train(root["train"].as_table(), "train");
    train.read("batch_size", c.train.batch_size);
    train.read("epochs", c.train.epochs);
    train.read("base_lr", c.train.base_lr);
    train.read("warmup_steps", c.train.warmup_steps);
    train.read("adam_beta1", c.train.adam_beta1);
    train.read("adam_beta2", c.train.adam_beta2);
    train.read("adam_eps", c.train.adam_eps);
    train.read("weight_decay", c.train.weight_decay);
    train.read("temperature", c.train.temperature);
    train.read("seed", c.train.seed);
    train.read("symmetric_loss", c.train.symmetric_loss);
    train.read("beta_1", c.train.schedule.beta_1);
    train.read("beta_min", c.train.schedule.beta_min);
    train.read("curriculum", c.train.schedule.enabled);
    train.reject_unknown();

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.parent_path());
}

json to_json(const RunConfig& c) {
    return json{{"data",
                 {{"path", c.data.path.string()},
                  {"grasp_path", c.data.grasp_path.string()},
                  {"probe_split", c.data.probe_split},
                  {"eval_split", c.data.eval_split}}},
                {"model", json(c.model)},
                {"lora", json(c.lora)},
                {"train", json(c.train)}};
}

} // namespace tlv
