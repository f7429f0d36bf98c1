#include "tlv/data_model.hpp"

#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace tlv {

using nlohmann::json;
namespace fs = std::filesystem;

std::string Sample::joined_phrases() const {
    std::string out;
    for (std::size_t i = 0; i < phrase_descriptions.size(); ++i) {
        if (i) out += ", ";
        out += phrase_descriptions[i];
    }
    return out;
}

const std::vector<std::string>& DatasetManifest::split(const std::string& split_name) const {
    auto it = splits.find(split_name);
    if (it == splits.end()) throw ValidationError("manifest has no split '" + split_name + "'");
    return it->second;
}

void Dataset::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < samples.size(); ++i) index_[samples[i].id] = i;
}

const Sample& Dataset::by_id(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown sample id '" + id + "'");
    return samples[it->second];
}

std::vector<const Sample*> Dataset::split_samples(const std::string& split_name) const {
    std::vector<const Sample*> out;
    for (const auto& id : manifest.split(split_name)) out.push_back(&by_id(id));
    return out;
}

// ---------------------------------------------------------------------------
// validation

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

} // namespace

void validate_sample(const Sample& s, int num_classes) {
    if (s.id.empty()) throw SchemaError(s.id, "id", "empty id");
    if (s.touch_image.pixels.empty() || s.vision_image.pixels.empty()) {
        throw SchemaError(s.id, "touch_image_path", "empty image");
    }
    if (s.touch_image.height != s.vision_image.height || s.touch_image.width != s.vision_image.width) {
        throw SchemaError(s.id, "vision_image_path", "touch and vision images differ in size");
    }
    if (blank(s.sentence_description)) {
        throw SchemaError(s.id, "sentence_description", "empty description");
    }
    if (s.phrase_descriptions.empty()) {
        throw SchemaError(s.id, "phrase_descriptions", "no phrases");
    }
    for (const auto& p : s.phrase_descriptions) {
        if (blank(p)) throw SchemaError(s.id, "phrase_descriptions", "blank phrase");
    }
    if (s.labels.material < 0 || s.labels.material >= num_classes) {
        throw SchemaError(s.id, "labels", "material out of range");
    }
    if ((s.labels.hard_soft != 0 && s.labels.hard_soft != 1) ||
        (s.labels.rough_smooth != 0 && s.labels.rough_smooth != 1)) {
        throw SchemaError(s.id, "labels", "binary label not in {0,1}");
    }
    if (s.grasp_frames.has_value() != s.grasp_success.has_value()) {
        throw SchemaError(s.id, "grasp_frames", "grasp_frames and grasp_success must appear together");
    }
    if (s.grasp_success && *s.grasp_success != 0 && *s.grasp_success != 1) {
        throw SchemaError(s.id, "grasp_success", "not in {0,1}");
    }
    if (s.grasp_frames) {
        for (const auto& f : *s.grasp_frames) {
            if (f.height != s.touch_image.height || f.width != s.touch_image.width) {
                throw SchemaError(s.id, "grasp_frames", "frame size differs from touch image");
            }
        }
    }
}

void validate_manifest(const DatasetManifest& m, const std::vector<Sample>& samples) {
    if (m.size != samples.size()) {
        throw ValidationError("manifest size " + std::to_string(m.size) + " != record count " +
                              std::to_string(samples.size()));
    }
    std::set<std::string> ids;
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) throw SchemaError(s.id, "id", "duplicate id");
    }
    std::set<std::string> seen;
    for (const auto& [name, members] : m.splits) {
        for (const auto& id : members) {
            if (!ids.count(id)) throw ValidationError("split '" + name + "' names unknown id '" + id + "'");
            if (!seen.insert(id).second) throw ValidationError("id '" + id + "' appears in more than one split");
        }
    }
}

// ---------------------------------------------------------------------------
// JSONL I/O

namespace {

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kRecordsFile = "records.jsonl";

const std::set<std::string>& allowed_keys() {
    static const std::set<std::string> keys{
        "id", "touch_image_path", "vision_image_path", "sentence_description", "phrase_descriptions",
        "labels", "grasp_frames", "grasp_success", "corruption_tag"};
    return keys;
}

template <typename T>
T field(const json& rec, const std::string& id, const char* key) {
    auto it = rec.find(key);
    if (it == rec.end()) throw SchemaError(id, key, "missing");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw SchemaError(id, key, "wrong type");
    }
}

Image load_image(const fs::path& base, const std::string& rel, const std::string& id, const char* key) {
    try {
        return read_png(base / rel);
    } catch (const LoadError& e) {
        throw LoadError("record '" + id + "', field '" + key + "': " + e.what());
    }
}

Sample parse_record(const json& rec, const fs::path& base, std::size_t line) {
    if (!rec.is_object()) {
        throw SchemaError("line " + std::to_string(line), "record", "not a JSON object");
    }
    std::string id = "line " + std::to_string(line);
    if (auto it = rec.find("id"); it != rec.end() && it->is_string()) id = it->get<std::string>();
    for (const auto& [key, value] : rec.items()) {
        if (!allowed_keys().count(key)) throw SchemaError(id, key, "unknown key");
    }

    Sample s;
    s.id = field<std::string>(rec, id, "id");
    s.touch_image = load_image(base, field<std::string>(rec, id, "touch_image_path"), id, "touch_image_path");
    s.vision_image = load_image(base, field<std::string>(rec, id, "vision_image_path"), id, "vision_image_path");
    s.sentence_description = field<std::string>(rec, id, "sentence_description");
    s.phrase_descriptions = field<std::vector<std::string>>(rec, id, "phrase_descriptions");

    const json labels = field<json>(rec, id, "labels");
    if (!labels.is_object()) throw SchemaError(id, "labels", "not an object");
    try {
        s.labels.material = labels.at("material").get<int>();
        s.labels.hard_soft = labels.at("hard_soft").get<int>();
        s.labels.rough_smooth = labels.at("rough_smooth").get<int>();
    } catch (const json::exception&) {
        throw SchemaError(id, "labels", "expected integer material, hard_soft, rough_smooth");
    }

    if (rec.contains("grasp_frames")) {
        auto paths = field<std::vector<std::string>>(rec, id, "grasp_frames");
        if (paths.size() != 4) throw SchemaError(id, "grasp_frames", "expected exactly 4 frames");
        GraspFrames frames;
        for (std::size_t k = 0; k < 4; ++k) frames[k] = load_image(base, paths[k], id, "grasp_frames");
        s.grasp_frames = std::move(frames);
    }
    if (rec.contains("grasp_success")) s.grasp_success = field<int>(rec, id, "grasp_success");
    if (rec.contains("corruption_tag")) s.corruption_tag = field<std::string>(rec, id, "corruption_tag");
    return s;
}

} // namespace

Dataset load_dataset(const fs::path& path) {
    fs::path manifest_path = fs::is_directory(path) ? path / kManifestFile : path;
    if (!fs::exists(manifest_path)) throw LoadError("manifest not found: " + manifest_path.string());
    const fs::path base = manifest_path.parent_path();
    const fs::path records_path = base / kRecordsFile;
    if (!fs::exists(records_path)) throw LoadError("records file not found: " + records_path.string());

    Dataset ds;
    {
        std::ifstream in(manifest_path);
        json j;
        try {
            in >> j;
            ds.manifest.name = j.at("name").get<std::string>();
            ds.manifest.class_names = j.at("class_names").get<std::vector<std::string>>();
            ds.manifest.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
            ds.manifest.seed = j.at("seed").get<std::uint64_t>();
            ds.manifest.size = j.at("size").get<std::size_t>();
            if (j.contains("corruptions")) {
                ds.manifest.corruptions = j.at("corruptions").get<std::map<std::string, std::string>>();
            }
        } catch (const json::exception& e) {
            throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
        }
    }

    std::ifstream in(records_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(line_no), "record", e.what());
        }
        Sample s = parse_record(rec, base, line_no);
        validate_sample(s, ds.manifest.num_classes());
        ds.samples.push_back(std::move(s));
    }
    validate_manifest(ds.manifest, ds.samples);
    ds.reindex();
    return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    validate_manifest(ds.manifest, ds.samples);
    fs::create_directories(dir / "images");

    json m;
    m["name"] = ds.manifest.name;
    m["class_names"] = ds.manifest.class_names;
    m["splits"] = ds.manifest.splits;
    m["seed"] = ds.manifest.seed;
    m["size"] = ds.manifest.size;
    if (!ds.manifest.corruptions.empty()) m["corruptions"] = ds.manifest.corruptions;
    std::ofstream(dir / kManifestFile) << m.dump(2) << '\n';

    std::ofstream out(dir / kRecordsFile);
    for (const auto& s : ds.samples) {
        validate_sample(s, ds.manifest.num_classes());
        const std::string touch = "images/" + s.id + "_touch.png";
        const std::string vision = "images/" + s.id + "_vision.png";
        write_png(dir / touch, s.touch_image);
        write_png(dir / vision, s.vision_image);

        json r;
        r["id"] = s.id;
        r["touch_image_path"] = touch;
        r["vision_image_path"] = vision;
        r["sentence_description"] = s.sentence_description;
        r["phrase_descriptions"] = s.phrase_descriptions;
        r["labels"] = {{"material", s.labels.material},
                       {"hard_soft", s.labels.hard_soft},
                       {"rough_smooth", s.labels.rough_smooth}};
        if (s.grasp_frames) {
            std::vector<std::string> paths;
            for (std::size_t k = 0; k < 4; ++k) {
                paths.push_back("images/" + s.id + "_grasp" + std::to_string(k) + ".png");
                write_png(dir / paths.back(), (*s.grasp_frames)[k]);
            }
            r["grasp_frames"] = paths;
        }
        if (s.grasp_success) r["grasp_success"] = *s.grasp_success;
        if (s.corruption_tag) r["corruption_tag"] = *s.corruption_tag;
        out << r.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// lexicon

const std::vector<MaterialClass>& material_lexicon() {
    static const std::vector<MaterialClass> lexicon{
        {"metal", true, false, {"cold", "metallic"}},
        {"wood", true, true, {"grainy", "splintery"}},
        {"fabric", false, false, {"woven", "silky"}},
        {"carpet", false, true, {"fuzzy", "fibrous"}},
        {"glass", true, false, {"slick", "glossy"}},
        {"brick", true, true, {"gritty", "porous"}},
        {"rubber", false, false, {"springy", "elastic"}},
        {"grass", false, true, {"prickly", "leafy"}},
        {"concrete", true, true, {"coarse", "dusty"}},
        {"plastic", true, false, {"synthetic", "uniform"}},
        {"leather", false, false, {"supple", "tanned"}},
        {"sponge", false, true, {"spongy", "absorbent"}},
        {"rock", true, true, {"jagged", "bumpy"}},
        {"tile", true, false, {"glazed", "flat"}},
        {"paper", false, false, {"papery", "thin"}},
        {"soil", false, true, {"damp", "crumbly"}},
        {"gravel", true, true, {"pebbly", "loose"}},
        {"marble", true, false, {"polished", "veined"}},
        {"towel", false, true, {"fluffy", "terry"}},
        {"sand", false, true, {"granular", "shifting"}},
    };
    return lexicon;
}

std::vector<std::string> attribute_words(int material) {
    const auto& lex = material_lexicon();
    if (material < 0 || material >= static_cast<int>(lex.size())) {
        throw DomainError("material id out of lexicon range");
    }
    const auto& m = lex[material];
    std::vector<std::string> words{m.name, m.hard ? "hard" : "soft", m.rough ? "rough" : "smooth"};
    words.insert(words.end(), m.attributes.begin(), m.attributes.end());
    return words;
}

// ---------------------------------------------------------------------------
// procedural rendering

namespace {

constexpr std::array<std::string_view, 4> kPositions{"top", "bottom", "left", "right"};
constexpr std::array<std::string_view, 4> kPressures{"light", "gentle", "firm", "heavy"};
constexpr std::array<std::string_view, 4> kSizes{"tiny", "small", "broad", "wide"};

struct Variant {
    int position = 0;
    int pressure = 0;
    int size = 0;
};

Variant variant_from_code(int code) {
    return {code % 4, (code / 4) % 4, (code / 16) % 4};
}

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::pair<double, double> contact_center(int position, int h, int w) {
    switch (position) {
    case 0: return {0.5 * w, 0.25 * h};
    case 1: return {0.5 * w, 0.75 * h};
    case 2: return {0.25 * w, 0.5 * h};
    default: return {0.75 * w, 0.5 * h};
    }
}

// GelSight-like frame: class-keyed stripe texture plus a pressure blob.
Image render_touch(int material, const Variant& v, bool in_contact, int h, int w, Rng& rng) {
    const auto& mc = material_lexicon()[material];
    const double freq = 2.0 + material % 5;
    const double theta = (material / 5) * std::numbers::pi / 4.0;
    const double amplitude = mc.rough ? 70.0 : 30.0;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double noise = mc.rough ? 10.0 : 4.0;
    const auto [cx, cy] = contact_center(v.position, h, w);
    const double radius = (0.08 + 0.06 * v.size) * w;
    const double depth = 25.0 + 20.0 * v.pressure;

    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = (x * std::cos(theta) + y * std::sin(theta)) / w;
            double wave = std::sin(2.0 * std::numbers::pi * freq * u + phase);
            if (mc.hard) wave = wave >= 0.0 ? 1.0 : -1.0;
            double texture = amplitude * wave;
            double blob = 0.0;
            if (in_contact) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                blob = depth * std::exp(-d2 / (2.0 * radius * radius));
            } else {
                texture *= 0.2;
            }
            const double base = 120.0 + texture;
            img.at(y, x, 0) = clamp_u8(base - 0.6 * blob + rng.normal(0.0, noise));
            img.at(y, x, 1) = clamp_u8(base + blob + rng.normal(0.0, noise));
            img.at(y, x, 2) = clamp_u8(base + 20.0 + 0.3 * blob + rng.normal(0.0, noise));
        }
    }
    return img;
}

// Scene view: class-keyed color and shape, with a dark marker where the
// sensor touches.
Image render_vision(int material, const Variant& v, int h, int w, Rng& rng) {
    const double hue = material * 2.0 * std::numbers::pi / 20.0;
    const double r = 128 + 100 * std::cos(hue);
    const double g = 128 + 100 * std::cos(hue - 2.0944);
    const double b = 128 + 100 * std::cos(hue + 2.0944);
    const int shape = material % 4;
    const double cx = 0.5 * w + rng.uniform(-1.5, 1.5);
    const double cy = 0.5 * h + rng.uniform(-1.5, 1.5);
    const double half = 0.3 * std::min(h, w);
    const auto [mx, my] = contact_center(v.position, h, w);

    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            bool inside = false;
            switch (shape) {
            case 0: inside = dx * dx + dy * dy <= half * half; break;
            case 1: inside = std::abs(dx) <= half && std::abs(dy) <= half; break;
            case 2: inside = dy >= -half && dy <= half && std::abs(dx) <= (dy + half) * 0.5; break;
            default: inside = std::abs(dx) + std::abs(dy) <= half; break;
            }
            double pr = 90, pg = 90, pb = 90;
            if (inside) {
                pr = r;
                pg = g;
                pb = b;
            }
            if ((x - mx) * (x - mx) + (y - my) * (y - my) <= 4.0) {
                pr *= 0.3;
                pg *= 0.3;
                pb *= 0.3;
            }
            img.at(y, x, 0) = clamp_u8(pr + rng.normal(0.0, 5.0));
            img.at(y, x, 1) = clamp_u8(pg + rng.normal(0.0, 5.0));
            img.at(y, x, 2) = clamp_u8(pb + rng.normal(0.0, 5.0));
        }
    }
    return img;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

struct Descriptions {
    std::string sentence;
    std::vector<std::string> phrases;
};

Descriptions describe(int material, const Variant& v, Rng& rng) {
    const auto& mc = material_lexicon()[material];
    const std::string hard = mc.hard ? "hard" : "soft";
    const std::string rough = mc.rough ? "rough" : "smooth";
    const std::string& a1 = mc.attributes[0];
    const std::string& a2 = mc.attributes[1];
    const std::string pos(kPositions[v.position]);
    const std::string pressure(kPressures[v.pressure]);
    const std::string size(kSizes[v.size]);

    Descriptions d;
    switch (rng.below(3)) {
    case 0:
        d.sentence = capitalize(mc.name) + " feels " + hard + " and " + rough + ", " + a1 + " and " + a2 +
                     ". A " + pressure + " press leaves a " + size + " imprint toward the " + pos + ".";
        break;
    case 1:
        d.sentence = "This " + mc.name + " is " + hard + " and " + rough + " to the touch, quite " + a1 +
                     ". The " + size + " contact patch sits " + pos + " under a " + pressure + " press.";
        break;
    default:
        d.sentence = "A " + hard + ", " + rough + " " + mc.name + " surface, " + a2 + " and " + a1 +
                     ". Pressed " + pressure + ", the " + size + " contact drifts to the " + pos + ".";
        break;
    }
    d.phrases = {hard, rough, a1, a2, pressure + " pressure", size + " contact", pos + " side"};
    return d;
}

constexpr std::array<std::string_view, 5> kForeignWords{"光滑", "粗糙", "гладкий", "шершавый", "ざらざら"};

std::string inject_defect(const std::string& sentence, std::string_view kind, Rng& rng) {
    const auto first_stop = sentence.find('.');
    if (kind == "multilanguage") {
        const std::string word(kForeignWords[rng.below(kForeignWords.size())]);
        return sentence.substr(0, first_stop) + " " + word + sentence.substr(first_stop);
    }
    if (kind == "special_marker") {
        switch (rng.below(4)) {
        case 0: return "AI: " + sentence;
        case 1: return sentence + " <br>";
        case 2: return "**" + sentence.substr(0, first_stop) + "**" + sentence.substr(first_stop);
        default: return "`" + sentence.substr(0, first_stop) + "`" + sentence.substr(first_stop);
        }
    }
    // redundancy: the first sentence repeated verbatim
    const std::string first = sentence.substr(0, first_stop + 1);
    return first + " " + sentence;
}

constexpr std::array<std::string_view, 3> kDefectKinds{"multilanguage", "special_marker", "redundancy"};

std::string make_id(const std::string& prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%05d", prefix.c_str(), i);
    return buf;
}

// Stratified split of ids grouped by key.
std::map<std::string, std::vector<std::string>> stratified_split(
    const std::vector<std::vector<std::string>>& groups, double train_fraction, double val_fraction, Rng& rng) {
    std::map<std::string, std::vector<std::string>> splits{{"train", {}}, {"val", {}}, {"test", {}}};
    for (auto group : groups) {
        rng.shuffle(std::span(group));
        const auto n = group.size();
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
        const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val_fraction * n)));
        for (std::size_t i = 0; i < n; ++i) {
            const char* target = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
            splits[target].push_back(group[i]);
        }
    }
    for (auto& [name, ids] : splits) std::sort(ids.begin(), ids.end());
    return splits;
}

} // namespace

void validate(const SyntheticConfig& c) {
    const int max_classes = static_cast<int>(material_lexicon().size());
    if (c.num_classes < 2 || c.num_classes > max_classes) {
        throw ConfigError("num_classes must be in [2, " + std::to_string(max_classes) + "]");
    }
    if (c.num_samples < c.num_classes) throw ConfigError("num_samples must be >= num_classes");
    if (c.height < 16 || c.width < 16) throw ConfigError("image height and width must be >= 16");
    if (!(c.corruption_rate >= 0.0 && c.corruption_rate < 1.0)) {
        throw ConfigError("corruption_rate must be in [0, 1)");
    }
    if (!(c.train_fraction > 0.0 && c.val_fraction >= 0.0 && c.train_fraction + c.val_fraction <= 1.0)) {
        throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
    }
}

Dataset generate_synthetic(const SyntheticConfig& c) {
    validate(c);
    const int n = c.num_samples;
    const int m = c.num_classes;

    // Balanced class assignment in a seeded order.
    std::vector<int> classes(n);
    for (int i = 0; i < n; ++i) classes[i] = i % m;
    Rng order_rng(derive_seed(c.seed, "synthetic/class-order"));
    order_rng.shuffle(std::span(classes));

    // Per-class variant codes cycle through a seeded permutation of all 64.
    std::vector<std::vector<int>> codes(m, std::vector<int>(64));
    for (int k = 0; k < m; ++k) {
        for (int v = 0; v < 64; ++v) codes[k][v] = v;
        Rng vr(derive_seed(c.seed, "synthetic/variants", k));
        vr.shuffle(std::span(codes[k]));
    }

    std::vector<std::string> corruption(n);
    const int n_corrupt = static_cast<int>(std::floor(c.corruption_rate * n));
    {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        Rng cr(derive_seed(c.seed, "synthetic/corruption"));
        cr.shuffle(std::span(idx));
        for (int k = 0; k < n_corrupt; ++k) corruption[idx[k]] = std::string(kDefectKinds[k % 3]);
    }

    Dataset ds;
    ds.manifest.name = c.name;
    ds.manifest.seed = c.seed;
    for (int k = 0; k < m; ++k) ds.manifest.class_names.push_back(material_lexicon()[k].name);

    std::vector<int> seen_per_class(m, 0);
    std::vector<std::vector<std::string>> groups(m);
    for (int i = 0; i < n; ++i) {
        const int cls = classes[i];
        const Variant v = variant_from_code(codes[cls][seen_per_class[cls]++ % 64]);
        Rng rng(derive_seed(c.seed, "synthetic/sample", static_cast<std::uint64_t>(i)));
        const auto& mc = material_lexicon()[cls];

        Sample s;
        s.id = make_id(c.name, i);
        s.labels = {cls, mc.hard ? 0 : 1, mc.rough ? 0 : 1};
        s.touch_image = render_touch(cls, v, true, c.height, c.width, rng);
        s.vision_image = render_vision(cls, v, c.height, c.width, rng);
        Descriptions d = describe(cls, v, rng);
        s.sentence_description = std::move(d.sentence);
        s.phrase_descriptions = std::move(d.phrases);
        if (!corruption[i].empty()) {
            s.sentence_description = inject_defect(s.sentence_description, corruption[i], rng);
            s.corruption_tag = corruption[i];
            ds.manifest.corruptions[s.id] = corruption[i];
        }
        groups[cls].push_back(s.id);
        ds.samples.push_back(std::move(s));
    }

    Rng split_rng(derive_seed(c.seed, "synthetic/splits"));
    ds.manifest.splits = stratified_split(groups, c.train_fraction, c.val_fraction, split_rng);
    ds.manifest.size = ds.samples.size();
    ds.reindex();
    return ds;
}

Dataset generate_grasp(const GraspConfig& c) {
    const int max_classes = static_cast<int>(material_lexicon().size());
    if (c.num_materials < 2 || c.num_materials > max_classes) {
        throw ConfigError("num_materials must be in [2, " + std::to_string(max_classes) + "]");
    }
    if (c.num_samples < 2) throw ConfigError("num_samples must be >= 2");
    if (c.height < 16 || c.width < 16) throw ConfigError("image height and width must be >= 16");

    const auto& lex = material_lexicon();
    std::vector<std::pair<int, int>> success_pairs;
    std::vector<std::pair<int, int>> failure_pairs;
    for (int a = 0; a < c.num_materials; ++a) {
        for (int b = 0; b < c.num_materials; ++b) {
            (lex[a].rough || lex[b].rough ? success_pairs : failure_pairs).emplace_back(a, b);
        }
    }
    if (failure_pairs.empty() || success_pairs.empty()) {
        throw ConfigError("grasp generator needs both rough and smooth materials");
    }

    Dataset ds;
    ds.manifest.name = c.name;
    ds.manifest.seed = c.seed;
    ds.manifest.class_names.assign(kGraspNames.begin(), kGraspNames.end());

    Rng pick(derive_seed(c.seed, "grasp/pairs"));
    std::map<std::pair<int, int>, std::vector<std::string>> by_object;
    for (int i = 0; i < c.num_samples; ++i) {
        const int success = i % 2;
        const auto& pool = success ? success_pairs : failure_pairs;
        const auto [a, b] = pool[pick.below(pool.size())];
        Rng rng(derive_seed(c.seed, "grasp/sample", static_cast<std::uint64_t>(i)));
        const Variant va = variant_from_code(static_cast<int>(rng.below(64)));
        const Variant vb = variant_from_code(static_cast<int>(rng.below(64)));

        Sample s;
        s.id = make_id(c.name, i);
        GraspFrames frames{render_touch(a, va, true, c.height, c.width, rng),
                           render_touch(b, vb, true, c.height, c.width, rng),
                           render_touch(a, va, success == 1, c.height, c.width, rng),
                           render_touch(b, vb, success == 1, c.height, c.width, rng)};
        s.touch_image = frames[0];
        s.vision_image = render_vision(a, va, c.height, c.width, rng);
        s.grasp_frames = std::move(frames);
        s.grasp_success = success;
        s.labels = {success, lex[a].hard ? 0 : 1, lex[a].rough ? 0 : 1};
        s.sentence_description = "The gripper closes on " + lex[a].name + " and " + lex[b].name + ". The grasp " +
                                 (success ? "holds steady" : "slips away") + ".";
        s.phrase_descriptions = {lex[a].name, lex[b].name, success ? "stable grasp" : "slipping grasp"};
        by_object[{a, b}].push_back(s.id);
        ds.samples.push_back(std::move(s));
    }

    // 8:1:1 split by object.
    std::vector<std::pair<int, int>> objects;
    for (const auto& [key, ids] : by_object) objects.push_back(key);
    Rng split_rng(derive_seed(c.seed, "grasp/splits"));
    split_rng.shuffle(std::span(objects));
    const std::size_t n_obj = objects.size();
    std::size_t n_test = std::max<std::size_t>(n_obj >= 3 ? 1 : 0, n_obj / 10);
    std::size_t n_val = std::max<std::size_t>(n_obj >= 3 ? 1 : 0, n_obj / 10);
    ds.manifest.splits = {{"train", {}}, {"val", {}}, {"test", {}}};
    for (std::size_t k = 0; k < n_obj; ++k) {
        const char* target = k < n_test ? "test" : (k < n_test + n_val ? "val" : "train");
        auto& dst = ds.manifest.splits[target];
        const auto& ids = by_object[objects[k]];
        dst.insert(dst.end(), ids.begin(), ids.end());
    }
    for (auto& [name, ids] : ds.manifest.splits) std::sort(ids.begin(), ids.end());
    ds.manifest.size = ds.samples.size();
    ds.reindex();
    return ds;
}

DatasetManifest subsample(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
    const bool allowed = std::any_of(kScaleFractions.begin(), kScaleFractions.end(),
                                     [&](double f) { return std::abs(f - fraction) < 1e-12; });
    if (!allowed) throw DomainError("fraction must be one of 0.25, 0.5, 0.75, 1.0");
    if (manifest.size == 0) throw DomainError("cannot subsample an empty manifest");

    DatasetManifest out = manifest;
    const auto& train = manifest.split("train");
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.size())));
    if (keep == train.size()) return out;

    // One permutation per seed; every fraction takes a prefix, so subsets nest.
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "subsample"));
    rng.shuffle(std::span(order));
    order.resize(keep);
    std::sort(order.begin(), order.end());

    auto& dst = out.splits["train"];
    dst.clear();
    for (auto i : order) dst.push_back(train[i]);
    return out;
}

} // namespace tlv
