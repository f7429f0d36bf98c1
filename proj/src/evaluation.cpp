#include "tlv/evaluation.hpp"

#include "tlv/alignment.hpp"
#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <set>

namespace tlv {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string to_string(Task task) {
    switch (task) {
    case Task::material: return "material";
    case Task::hard_soft: return "hard_soft";
    case Task::rough_smooth: return "rough_smooth";
    case Task::grasp: return "grasp";
    }
    return "unknown";
}

std::string to_string(Protocol protocol) {
    return protocol == Protocol::linear_probe ? "linear_probe" : "zero_shot";
}

Task parse_task(std::string_view name) {
    if (name == "material") return Task::material;
    if (name == "hard_soft") return Task::hard_soft;
    if (name == "rough_smooth") return Task::rough_smooth;
    if (name == "grasp") return Task::grasp;
    throw ValidationError("unknown task '" + std::string(name) + "'");
}

std::int64_t EvalReport::total() const {
    std::int64_t n = 0;
    for (const auto& row : confusion) {
        for (auto v : row) n += v;
    }
    return n;
}

std::int64_t EvalReport::correct() const {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) n += confusion[i][i];
    return n;
}

EvalReport make_report(Task task, Protocol protocol, std::span<const int> truth, std::span<const int> predicted,
                       int num_classes) {
    if (truth.size() != predicted.size()) throw ShapeError("make_report: truth and predictions differ in length");
    if (num_classes < 1) throw DomainError("make_report: num_classes must be positive");
    EvalReport r;
    r.task = task;
    r.protocol = protocol;
    r.confusion.assign(num_classes, std::vector<std::int64_t>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
            throw DomainError("make_report: label out of range");
        }
        ++r.confusion[truth[i]][predicted[i]];
    }
    const auto total = r.total();
    r.accuracy = total == 0 ? 0.0 : static_cast<double>(r.correct()) / static_cast<double>(total);
    return r;
}

json to_json(const EvalReport& r) {
    return json{{"task", to_string(r.task)},         {"protocol", to_string(r.protocol)},
                {"accuracy", r.accuracy},           {"confusion", r.confusion},
                {"checkpoint", r.checkpoint},       {"split", r.split},
                {"seed", r.seed},                   {"num_samples", r.total()}};
}

// ---------------------------------------------------------------------------
// linear probe

namespace {

struct ProbeObjective {
    const MatrixXd& x; // n x (d + 1), last column ones
    std::span<const int> y;
    int classes;
    double l2;

    double operator()(const MatrixXd& w, MatrixXd& grad) const {
        const double n = static_cast<double>(x.rows());
        MatrixXd logits = x * w.transpose();
        MatrixXd p(logits.rows(), logits.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const double mx = logits.row(i).maxCoeff();
            const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
            loss += lse - logits(i, y[i]);
            p.row(i) = (logits.row(i).array() - lse).exp();
            p(i, y[i]) -= 1.0;
        }
        grad = p.transpose() * x / n;
        const auto d = w.cols() - 1;
        grad.leftCols(d) += l2 * w.leftCols(d);
        return loss / n + 0.5 * l2 * w.leftCols(d).squaredNorm();
    }
};

double dot(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.array()).sum(); }

} // namespace

LinearProbe LinearProbe::fit(const MatrixXd& features, std::span<const int> labels, int num_classes,
                             const ProbeOptions& options) {
    if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("linear probe: features and labels differ in length");
    }
    if (features.rows() == 0) throw DegenerateDataError("linear probe: empty training split");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw DegenerateDataError("linear probe: training split holds a single class");
    for (int l : labels) {
        if (l < 0 || l >= num_classes) throw DomainError("linear probe: label out of range");
    }

    MatrixXd x(features.rows(), features.cols() + 1);
    x << features, VectorXd::Ones(features.rows());
    ProbeObjective f{x, labels, num_classes, options.l2};

    MatrixXd w = MatrixXd::Zero(num_classes, x.cols());
    MatrixXd g;
    double fx = f(w, g);

    // L-BFGS with Armijo backtracking; deterministic from the zero start.
    constexpr int memory = 10;
    std::deque<std::pair<MatrixXd, MatrixXd>> history;
    LinearProbe probe;
    int it = 0;
    for (; it < options.max_iterations && g.norm() > options.grad_tolerance; ++it) {
        MatrixXd q = g;
        std::vector<double> alpha(history.size());
        for (std::size_t k = history.size(); k-- > 0;) {
            const auto& [s, yk] = history[k];
            alpha[k] = dot(s, q) / dot(yk, s);
            q -= alpha[k] * yk;
        }
        if (!history.empty()) {
            const auto& [s, yk] = history.back();
            q *= dot(s, yk) / dot(yk, yk);
        } else {
            q /= std::max(1.0, g.norm());
        }
        for (std::size_t k = 0; k < history.size(); ++k) {
            const auto& [s, yk] = history[k];
            const double beta = dot(yk, q) / dot(yk, s);
            q += (alpha[k] - beta) * s;
        }
        MatrixXd direction = -q;
        double slope = dot(g, direction);
        if (slope >= 0.0) {
            direction = -g;
            slope = -g.squaredNorm();
            history.clear();
        }

        double step = 1.0;
        MatrixXd w_new, g_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            w_new = w + step * direction;
            f_new = f(w_new, g_new);
            if (f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        MatrixXd s = w_new - w;
        MatrixXd yk = g_new - g;
        if (dot(s, yk) > 1e-12) {
            history.emplace_back(std::move(s), std::move(yk));
            if (history.size() > memory) history.pop_front();
        }
        w = std::move(w_new);
        g = std::move(g_new);
        fx = f_new;
    }
    probe.weights_ = std::move(w);
    probe.grad_norm_ = g.norm();
    probe.iterations_ = it;
    return probe;
}

std::vector<int> LinearProbe::predict(const MatrixXd& features) const {
    if (features.cols() + 1 != weights_.cols()) throw ShapeError("linear probe: feature width mismatch");
    std::vector<int> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        VectorXd scores = weights_.leftCols(features.cols()) * features.row(i).transpose() + weights_.col(features.cols());
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < scores.size(); ++c) {
            if (scores(c) > scores(best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

EvalReport linear_probe(const EmbeddingBatch& train, std::span<const int> train_labels, const EmbeddingBatch& test,
                        std::span<const int> test_labels, int num_classes, Task task, const ProbeOptions& options) {
    train.validate();
    test.validate();
    const LinearProbe probe = LinearProbe::fit(train.rows, train_labels, num_classes, options);
    const auto predicted = probe.predict(test.rows);
    EvalReport r = make_report(task, Protocol::linear_probe, test_labels, predicted, num_classes);
    r.seed = options.seed;
    return r;
}

// ---------------------------------------------------------------------------
// zero-shot

void PromptTemplateSet::validate() const {
    if (templates.empty()) throw ConfigError("prompt template set is empty");
    if (labels.empty()) throw ConfigError("prompt template set has no class labels");
    for (const auto& t : templates) {
        const auto first = t.find("{label}");
        if (first == std::string::npos || t.find("{label}", first + 1) != std::string::npos) {
            throw ConfigError("template must contain {label} exactly once: '" + t + "'");
        }
    }
}

PromptTemplateSet PromptTemplateSet::defaults(std::vector<std::string> labels) {
    return {{"an object that feels {label}", "a surface that is {label} to the touch", "this texture feels {label}"},
            std::move(labels)};
}

EmbeddingBatch class_prompt_embeddings(const PromptTemplateSet& prompts, const TextEncoder& text) {
    prompts.validate();
    std::vector<std::string> texts;
    for (const auto& label : prompts.labels) {
        for (const auto& t : prompts.templates) {
            std::string s = t;
            s.replace(s.find("{label}"), 7, label);
            texts.push_back(std::move(s));
        }
    }
    const EmbeddingBatch all = EmbeddingBatch::normalize(text.encode(texts).rows);
    const auto per = static_cast<Eigen::Index>(prompts.templates.size());
    MatrixXd means(static_cast<Eigen::Index>(prompts.labels.size()), all.dim());
    for (Eigen::Index c = 0; c < means.rows(); ++c) means.row(c) = all.rows.middleRows(c * per, per).colwise().mean();
    return EmbeddingBatch::normalize(means);
}

int zero_shot_classify(const VectorXd& touch, const EmbeddingBatch& classes) {
    if (classes.size() == 0) throw ConfigError("zero-shot: no class embeddings");
    if (touch.size() != classes.dim()) throw ShapeError("zero-shot: embedding width mismatch");
    const double tn = touch.norm();
    if (!(tn > 0.0)) throw NumericError("zero-shot: zero touch embedding");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < classes.size(); ++c) {
        const double score = classes.rows.row(c).dot(touch) / (tn * classes.rows.row(c).norm());
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(c);
        }
    }
    return best;
}

int zero_shot_classify(const VectorXd& touch, const PromptTemplateSet& prompts, const TextEncoder& text) {
    return zero_shot_classify(touch, class_prompt_embeddings(prompts, text));
}

// ---------------------------------------------------------------------------
// grasp

VectorXd pool_grasp(std::span<const VectorXd> frames) {
    if (frames.size() != 4) {
        throw ValidationError("pool_grasp: expected 4 frames, got " + std::to_string(frames.size()));
    }
    VectorXd mean = VectorXd::Zero(frames[0].size());
    for (const auto& f : frames) {
        if (f.size() != mean.size()) throw ShapeError("pool_grasp: frames differ in width");
        mean += f;
    }
    mean /= 4.0;
    const double n = mean.norm();
    if (!(n > 0.0)) throw NumericError("pool_grasp: pooled embedding has zero norm");
    return mean / n;
}

// ---------------------------------------------------------------------------
// runners

int task_label(const Sample& s, Task task) {
    switch (task) {
    case Task::material: return s.labels.material;
    case Task::hard_soft: return s.labels.hard_soft;
    case Task::rough_smooth: return s.labels.rough_smooth;
    case Task::grasp:
        if (!s.grasp_success) throw ValidationError("sample '" + s.id + "' has no grasp label");
        return *s.grasp_success;
    }
    return 0;
}

int task_num_classes(Task task, const DatasetManifest& manifest) {
    return task == Task::material ? manifest.num_classes() : 2;
}

std::vector<std::string> zero_shot_labels(Task task, const DatasetManifest& manifest) {
    switch (task) {
    case Task::material: return manifest.class_names;
    case Task::hard_soft: return {std::string(kHardSoftNames[0]), std::string(kHardSoftNames[1])};
    case Task::rough_smooth: return {std::string(kRoughSmoothNames[0]), std::string(kRoughSmoothNames[1])};
    case Task::grasp: return {"slipping grasp", "stable grasp"};
    }
    return {};
}

EmbeddingBatch touch_embeddings(const ImageEncoder& touch, std::span<const Sample* const> samples, bool pooled_grasp,
                                std::size_t chunk) {
    const auto d = touch.config().embed_dim;
    MatrixXd out(static_cast<Eigen::Index>(samples.size()), d);
    if (!pooled_grasp) {
        for (std::size_t start = 0; start < samples.size(); start += chunk) {
            const auto end = std::min(samples.size(), start + chunk);
            std::vector<const Image*> images;
            for (auto i = start; i < end; ++i) images.push_back(&samples[i]->touch_image);
            out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
                EmbeddingBatch::normalize(touch.encode(images).rows).rows;
        }
        return {out, true};
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = *samples[i];
        if (!s.grasp_frames) throw ValidationError("sample '" + s.id + "' has no grasp frames");
        std::vector<const Image*> images;
        for (const auto& f : *s.grasp_frames) images.push_back(&f);
        const MatrixXd frames = EmbeddingBatch::normalize(touch.encode(images).rows).rows;
        std::vector<VectorXd> rows;
        for (Eigen::Index r = 0; r < 4; ++r) rows.push_back(frames.row(r).transpose());
        out.row(static_cast<Eigen::Index>(i)) = pool_grasp(rows).transpose();
    }
    return {out, true};
}

EmbeddingBatch grasp_concat_embeddings(const ImageEncoder& touch, std::span<const Sample* const> samples) {
    const auto d = touch.config().embed_dim;
    MatrixXd out(static_cast<Eigen::Index>(samples.size()), 4 * d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = *samples[i];
        if (!s.grasp_frames) throw ValidationError("sample '" + s.id + "' has no grasp frames");
        std::vector<const Image*> images;
        for (const auto& f : *s.grasp_frames) images.push_back(&f);
        const MatrixXd frames = EmbeddingBatch::normalize(touch.encode(images).rows).rows;
        for (Eigen::Index r = 0; r < 4; ++r) out.block(static_cast<Eigen::Index>(i), r * d, 1, d) = frames.row(r);
    }
    return {out, false};
}

namespace {

std::vector<int> labels_of(std::span<const Sample* const> samples, Task task) {
    std::vector<int> out;
    for (const auto* s : samples) out.push_back(task_label(*s, task));
    return out;
}

} // namespace

EvalReport evaluate(const EncoderBundle& bundle, const Dataset& dataset, Task task, Protocol protocol,
                    const EvalOptions& options) {
    const auto eval_samples = dataset.split_samples(options.eval_split);
    if (eval_samples.empty()) throw ValidationError("evaluation split '" + options.eval_split + "' is empty");
    const bool grasp = task == Task::grasp;
    const int classes = task_num_classes(task, dataset.manifest);
    const auto eval_labels = labels_of(eval_samples, task);

    EvalReport report;
    if (protocol == Protocol::linear_probe) {
        const auto train_samples = dataset.split_samples(options.probe_split);
        const auto train_labels = labels_of(train_samples, task);
        ProbeOptions probe = options.probe;
        probe.seed = options.seed;
        if (grasp && options.grasp_concat) {
            report = linear_probe(grasp_concat_embeddings(bundle.touch, train_samples), train_labels,
                                  grasp_concat_embeddings(bundle.touch, eval_samples), eval_labels, classes, task,
                                  probe);
        } else {
            report = linear_probe(touch_embeddings(bundle.touch, train_samples, grasp), train_labels,
                                  touch_embeddings(bundle.touch, eval_samples, grasp), eval_labels, classes, task,
                                  probe);
        }
    } else {
        const auto prompts = PromptTemplateSet::defaults(zero_shot_labels(task, dataset.manifest));
        const EmbeddingBatch class_emb = class_prompt_embeddings(prompts, bundle.text);
        const EmbeddingBatch touch = touch_embeddings(bundle.touch, eval_samples, grasp);
        std::vector<int> predicted;
        for (Eigen::Index i = 0; i < touch.size(); ++i) {
            predicted.push_back(zero_shot_classify(touch.rows.row(i).transpose(), class_emb));
        }
        report = make_report(task, Protocol::zero_shot, eval_labels, predicted, classes);
    }
    report.split = options.eval_split;
    report.checkpoint = options.checkpoint_id;
    report.seed = options.seed;
    return report;
}

EvalReport chance_report(Task task, std::span<const int> truth, int num_classes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "chance"));
    std::vector<int> predicted;
    for (std::size_t i = 0; i < truth.size(); ++i) predicted.push_back(static_cast<int>(rng.below(num_classes)));
    EvalReport r = make_report(task, Protocol::linear_probe, truth, predicted, num_classes);
    r.checkpoint = "chance";
    r.seed = seed;
    return r;
}

double in_batch_retrieval(const EncoderBundle& bundle, std::span<const Sample* const> samples, int batch_size) {
    if (samples.empty()) throw ValidationError("in_batch_retrieval: no samples");
    std::size_t hits = 0;
    const auto k = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < samples.size(); start += k) {
        const auto batch = samples.subspan(start, std::min(k, samples.size() - start));
        const EmbeddingBatch x = touch_embeddings(bundle.touch, batch);
        const EmbeddingBatch y = text_targets(bundle.text, batch);
        const MatrixXd sim = x.rows * y.rows.transpose();
        for (Eigen::Index i = 0; i < sim.rows(); ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index j = 1; j < sim.cols(); ++j) {
                if (sim(i, j) > sim(i, best)) best = j;
            }
            if (best == i) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// tables

namespace {

std::string pct(const std::optional<EvalReport>& r) {
    if (!r) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r->accuracy);
    return buf;
}

std::string pct_delta(const std::optional<EvalReport>& r, const std::optional<EvalReport>& ref) {
    if (!r) return "-";
    if (!ref) return pct(r);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.1f (%+.1f)", 100.0 * r->accuracy, 100.0 * (r->accuracy - ref->accuracy));
    return buf;
}

std::string row(const std::vector<std::string>& cells, const std::vector<int>& widths) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        char buf[128];
        if (i == 0) {
            std::snprintf(buf, sizeof buf, "%-*s", widths[i], cells[i].c_str());
        } else {
            std::snprintf(buf, sizeof buf, " | %*s", widths[i], cells[i].c_str());
        }
        out += buf;
    }
    return out + "\n";
}

std::string rule(const std::vector<int>& widths) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) n += static_cast<std::size_t>(widths[i]) + (i ? 3 : 0);
    return std::string(n, '-') + "\n";
}

json row_json(const BenchmarkRow& r) {
    json j{{"model", r.model}};
    for (const auto& [key, rep] : {std::pair{"material", &r.material}, std::pair{"hard_soft", &r.hard_soft},
                                   std::pair{"rough_smooth", &r.rough_smooth}, std::pair{"grasp", &r.grasp}}) {
        j[key] = *rep ? to_json(**rep) : json(nullptr);
    }
    return j;
}

json metrics_json(const std::vector<StepResult>& metrics) {
    json arr = json::array();
    for (const auto& m : metrics) arr.push_back({{"step", m.step}, {"beta", m.beta}, {"loss", m.loss}});
    return arr;
}

} // namespace

std::string format_benchmark_table(const std::vector<BenchmarkRow>& lp, const std::vector<BenchmarkRow>& zs,
                                   int material_classes) {
    const std::vector<int> w{28, 9, 10, 13, 15};
    std::string out = row({"Model", "Material", "Hard/Soft", "Rough/Smooth", "Robot Grasping"}, w);
    out += rule(w);
    char chance[32];
    std::snprintf(chance, sizeof chance, "%.1f", 100.0 / material_classes);
    out += row({"Chance", chance, "50.0", "50.0", "50.0"}, w);
    out += "Linear Probing\n";
    for (const auto& r : lp) out += row({r.model, pct(r.material), pct(r.hard_soft), pct(r.rough_smooth), pct(r.grasp)}, w);
    out += "Zero-Shot\n";
    for (const auto& r : zs) out += row({r.model, pct(r.material), pct(r.hard_soft), pct(r.rough_smooth), pct(r.grasp)}, w);
    return out;
}

std::string ScaleAblation::format_table() const {
    const std::vector<int> w{12, 24, 14, 12, 14, 12};
    std::string out = row({"Dataset", "Scale", "Material LP", "Material ZS", "Grasping LP", "Grasping ZS"}, w);
    out += rule(w);
    for (const auto& r : rows) {
        char scale[64];
        std::snprintf(scale, sizeof scale, "%zu - %.0f%% of the total", r.train_size, 100.0 * r.fraction);
        out += row({dataset_name, scale, pct(r.material_probe), pct(r.material_zero_shot), pct(r.grasp_probe),
                    pct(r.grasp_zero_shot)},
                   w);
    }
    return out;
}

json ScaleAblation::to_json() const {
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back({{"fraction", r.fraction},
                       {"train_size", r.train_size},
                       {"train_ids", r.train_ids},
                       {"material_linear_probe", tlv::to_json(r.material_probe)},
                       {"material_zero_shot", tlv::to_json(r.material_zero_shot)},
                       {"grasp_linear_probe", r.grasp_probe ? tlv::to_json(*r.grasp_probe) : json(nullptr)},
                       {"grasp_zero_shot", r.grasp_zero_shot ? tlv::to_json(*r.grasp_zero_shot) : json(nullptr)}});
    }
    return json{{"dataset", dataset_name}, {"rows", arr}};
}

std::string CurriculumAblation::format_table() const {
    const std::vector<int> w{44, 14, 14, 14, 15};
    std::string out = row({"Model", "Material", "Hard/Soft", "Rough/Smooth", "Robot Grasping"}, w);
    out += rule(w);
    out += "Linear Probing\n";
    out += row({"TLV-Link", pct(with_probe.material), pct(with_probe.hard_soft), pct(with_probe.rough_smooth),
                pct(with_probe.grasp)},
               w);
    out += row({"- w/o Multi-stage Curriculum Representation", pct_delta(without_probe.material, with_probe.material),
                pct_delta(without_probe.hard_soft, with_probe.hard_soft),
                pct_delta(without_probe.rough_smooth, with_probe.rough_smooth),
                pct_delta(without_probe.grasp, with_probe.grasp)},
               w);
    out += "Zero-Shot\n";
    out += row({"TLV-Link", pct(with_zero_shot.material), pct(with_zero_shot.hard_soft),
                pct(with_zero_shot.rough_smooth), pct(with_zero_shot.grasp)},
               w);
    out += row({"- w/o Multi-stage Curriculum Representation",
                pct_delta(without_zero_shot.material, with_zero_shot.material),
                pct_delta(without_zero_shot.hard_soft, with_zero_shot.hard_soft),
                pct_delta(without_zero_shot.rough_smooth, with_zero_shot.rough_smooth),
                pct_delta(without_zero_shot.grasp, with_zero_shot.grasp)},
               w);
    return out;
}

json CurriculumAblation::to_json() const {
    return json{{"linear_probe", {{"with_curriculum", row_json(with_probe)}, {"without_curriculum", row_json(without_probe)}}},
                {"zero_shot",
                 {{"with_curriculum", row_json(with_zero_shot)}, {"without_curriculum", row_json(without_zero_shot)}}},
                {"with_curriculum_metrics", metrics_json(with_metrics)},
                {"without_curriculum_metrics", metrics_json(without_metrics)}};
}

// ---------------------------------------------------------------------------
// experiments

TrainedModel train_model(const Dataset& dataset, const DatasetManifest& manifest, const RunConfig& config,
                         const std::filesystem::path& out_dir) {
    config.validate();
    TrainedModel model{EncoderBundle(config.model, config.lora, config.train.temperature, config.train.seed), {}};
    TrainOptions options;
    options.split = config.data.probe_split;
    options.out_dir = out_dir;
    options.metadata = {{"dataset", manifest.name}};
    model.result = train(model.bundle, dataset, manifest, config.train, options);
    return model;
}

BenchmarkRow evaluate_all(const EncoderBundle& bundle, const Dataset& dataset, const Dataset* grasp,
                          Protocol protocol, const EvalOptions& options, const std::string& model_name) {
    BenchmarkRow r;
    r.model = model_name;
    r.material = evaluate(bundle, dataset, Task::material, protocol, options);
    r.hard_soft = evaluate(bundle, dataset, Task::hard_soft, protocol, options);
    r.rough_smooth = evaluate(bundle, dataset, Task::rough_smooth, protocol, options);
    if (grasp) r.grasp = evaluate(bundle, *grasp, Task::grasp, protocol, options);
    return r;
}

ScaleAblation run_scale_ablation(const Dataset& dataset, const Dataset* grasp, const RunConfig& config,
                                 std::span<const double> fractions) {
    ScaleAblation out;
    out.dataset_name = dataset.manifest.name;
    EvalOptions eval;
    eval.probe_split = config.data.probe_split;
    eval.eval_split = config.data.eval_split;
    eval.seed = config.train.seed;
    for (double f : fractions) {
        DatasetManifest sub = subsample(dataset.manifest, f, config.train.seed);
        TrainedModel model = train_model(dataset, sub, config);
        ScaleRow r;
        r.fraction = f;
        r.train_ids = sub.split(config.data.probe_split);
        r.train_size = r.train_ids.size();
        char id[32];
        std::snprintf(id, sizeof id, "scale-%.0f", 100.0 * f);
        eval.checkpoint_id = id;
        r.material_probe = evaluate(model.bundle, dataset, Task::material, Protocol::linear_probe, eval);
        r.material_zero_shot = evaluate(model.bundle, dataset, Task::material, Protocol::zero_shot, eval);
        if (grasp) {
            r.grasp_probe = evaluate(model.bundle, *grasp, Task::grasp, Protocol::linear_probe, eval);
            r.grasp_zero_shot = evaluate(model.bundle, *grasp, Task::grasp, Protocol::zero_shot, eval);
        }
        out.rows.push_back(std::move(r));
    }
    return out;
}

CurriculumAblation run_curriculum_ablation(const Dataset& dataset, const Dataset* grasp, const RunConfig& config,
                                           const std::filesystem::path& out_dir) {
    RunConfig with = config;
    with.train.schedule.enabled = true;
    RunConfig without = config;
    without.train.schedule.enabled = false;

    EvalOptions eval;
    eval.probe_split = config.data.probe_split;
    eval.eval_split = config.data.eval_split;
    eval.seed = config.train.seed;

    CurriculumAblation out;
    {
        TrainedModel m = train_model(dataset, dataset.manifest, with, out_dir.empty() ? out_dir : out_dir / "with_curriculum");
        out.with_metrics = m.result.metrics;
        eval.checkpoint_id = "with_curriculum";
        out.with_probe = evaluate_all(m.bundle, dataset, grasp, Protocol::linear_probe, eval, "TLV-Link");
        out.with_zero_shot = evaluate_all(m.bundle, dataset, grasp, Protocol::zero_shot, eval, "TLV-Link");
    }
    {
        TrainedModel m =
            train_model(dataset, dataset.manifest, without, out_dir.empty() ? out_dir : out_dir / "without_curriculum");
        out.without_metrics = m.result.metrics;
        eval.checkpoint_id = "without_curriculum";
        const std::string name = "- w/o Multi-stage Curriculum Representation";
        out.without_probe = evaluate_all(m.bundle, dataset, grasp, Protocol::linear_probe, eval, name);
        out.without_zero_shot = evaluate_all(m.bundle, dataset, grasp, Protocol::zero_shot, eval, name);
    }
    return out;
}

} // namespace tlv
