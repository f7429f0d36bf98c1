// Command-line entry point: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.

#include "tlv/alignment.hpp"
#include "tlv/config.hpp"
#include "tlv/curation.hpp"
#include "tlv/data_model.hpp"
#include "tlv/encoders.hpp"
#include "tlv/error.hpp"
#include "tlv/evaluation.hpp"
#include "tlv/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "[tlvlink] " << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw tlv::Error("cannot write " + path.string());
    f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Collects what a run produced and writes run_manifest.json next to it.
class RunRecord {
public:
    RunRecord(std::string command, std::vector<std::string> argv)
        : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()),
          started_at_(utc_now()) {}

    void artifact(const fs::path& p) { artifacts_.push_back(p.string()); }
    void set_config(json config) { config_ = std::move(config); }
    void set_seed(std::uint64_t seed) { seed_ = seed; }

    void write(const fs::path& out_dir) const {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json j{{"command", command_},
               {"argv", argv_},
               {"config", config_},
               {"seed", seed_},
               {"artifacts", artifacts_},
               {"started_at", started_at_},
               {"wall_clock_seconds", secs},
               {"tool_version", tlv::kVersion}};
        write_json(out_dir / "run_manifest.json", j);
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    std::chrono::steady_clock::time_point start_;
    std::string started_at_;
    json config_ = json::object();
    std::uint64_t seed_ = 0;
    std::vector<std::string> artifacts_;
};

// Options shared by the model-level subcommands.
struct CommonOptions {
    std::string config;
    std::string data;
    std::string grasp_data;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool need_out = true) {
    cmd->add_option("--config", o.config, "TOML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--data", o.data, "dataset directory (overrides [data].path)");
    cmd->add_option("--grasp-data", o.grasp_data, "grasp dataset directory (overrides [data].grasp_path)");
    cmd->add_option("--seed", o.seed, "seed for every random draw (overrides [train].seed)");
    auto* out = cmd->add_option("--out", o.out, "output directory");
    if (need_out) out->required();
}

tlv::RunConfig resolve_config(const CommonOptions& o) {
    tlv::RunConfig c = o.config.empty() ? tlv::RunConfig{} : tlv::load_run_config(o.config);
    if (!o.data.empty()) c.data.path = o.data;
    if (!o.grasp_data.empty()) c.data.grasp_path = o.grasp_data;
    if (o.seed) c.train.seed = *o.seed;
    return c;
}

tlv::Dataset require_dataset(const tlv::RunConfig& c) {
    if (c.data.path.empty()) throw tlv::ConfigError("no dataset given: pass --data or set [data].path");
    return tlv::load_dataset(c.data.path);
}

std::optional<tlv::Dataset> optional_grasp(const tlv::RunConfig& c) {
    if (c.data.grasp_path.empty()) return std::nullopt;
    return tlv::load_dataset(c.data.grasp_path);
}

fs::path prepare_out(const std::string& out) {
    fs::path p(out);
    fs::create_directories(p);
    return p;
}

tlv::EvalOptions eval_options(const tlv::RunConfig& c, const std::string& checkpoint) {
    tlv::EvalOptions e;
    e.probe_split = c.data.probe_split;
    e.eval_split = c.data.eval_split;
    e.seed = c.train.seed;
    e.checkpoint_id = checkpoint;
    return e;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Touch-language-vision alignment toolkit"};
    app.set_version_flag("--version", tlv::kVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    const std::vector<std::string> args(argv, argv + argc);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic touch/vision/text dataset");
    int gen_m = 4, gen_n = 256, gen_size = 32, gen_materials = 8;
    std::uint64_t gen_seed = 0;
    double gen_corruption = 0.0, gen_train = 0.8, gen_val = 0.1;
    bool gen_grasp = false;
    std::string gen_out;
    gen->add_option("--m", gen_m, "number of material classes (1-20)");
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--image-size", gen_size, "image height and width in pixels");
    gen->add_option("--corruption-rate", gen_corruption, "fraction of descriptions given one defect");
    gen->add_option("--train-fraction", gen_train, "fraction of samples in the train split");
    gen->add_option("--val-fraction", gen_val, "fraction of samples in the val split");
    gen->add_flag("--grasp", gen_grasp, "generate four-frame grasp samples instead");
    gen->add_option("--materials", gen_materials, "grasp: number of materials objects are built from");
    gen->add_option("--out", gen_out, "output directory")->required();

    // filter
    auto* filter = app.add_subcommand("filter", "run the regex pattern filter over descriptions");
    std::string filter_data, filter_text, filter_out;
    filter->add_option("--data", filter_data, "dataset directory");
    filter->add_option("--text", filter_text, "filter a single description instead of a dataset");
    filter->add_option("--out", filter_out, "output directory");

    // curate
    auto* curate = app.add_subcommand("curate", "filter and judge descriptions, write the correction queue");
    std::string curate_data, curate_out;
    curate->add_option("--data", curate_data, "dataset directory")->required();
    curate->add_option("--out", curate_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train the touch encoder and vision adapters");
    CommonOptions train_o;
    bool no_curriculum = false, symmetric = false;
    std::optional<int> epochs, batch_size, warmup;
    std::optional<double> lr, beta_1;
    add_common(train, train_o);
    train->add_flag("--no-curriculum", no_curriculum, "disable the vision-to-touch curriculum (beta = 0)");
    train->add_flag("--symmetric", symmetric, "average both InfoNCE directions");
    train->add_option("--epochs", epochs, "override [train].epochs (default: config value)");
    train->add_option("--batch-size", batch_size, "override [train].batch_size (default: config value)");
    train->add_option("--lr", lr, "override [train].base_lr (default: config value)");
    train->add_option("--warmup", warmup, "override [train].warmup_steps (default: config value)");
    train->add_option("--beta-1", beta_1, "override [train].beta_1 (default: config value)");

    // probe / zeroshot / grasp
    auto* probe = app.add_subcommand("probe", "linear probe on frozen touch embeddings");
    auto* zeroshot = app.add_subcommand("zeroshot", "zero-shot classification by prompt similarity");
    auto* grasp = app.add_subcommand("grasp", "grasp-outcome prediction from four pooled frames");
    CommonOptions eval_o;
    std::string checkpoint, task_name = "all", grasp_protocol = "both";
    bool grasp_concat = false;
    for (auto* cmd : {probe, zeroshot, grasp}) {
        add_common(cmd, eval_o);
        cmd->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);
    }
    for (auto* cmd : {probe, zeroshot}) {
        cmd->add_option("--task", task_name, "material, hard_soft, rough_smooth or all")
            ->check(CLI::IsMember({"material", "hard_soft", "rough_smooth", "all"}));
    }
    grasp->add_option("--protocol", grasp_protocol, "linear_probe, zero_shot or both")
        ->check(CLI::IsMember({"linear_probe", "zero_shot", "both"}));
    grasp->add_flag("--concat", grasp_concat, "probe on concatenated frame embeddings instead of the pooled mean");

    // ablations
    auto* ablate_scale = app.add_subcommand("ablate-scale", "retrain on 25/50/75/100% of the train split");
    CommonOptions scale_o;
    add_common(ablate_scale, scale_o);
    auto* ablate_curr = app.add_subcommand("ablate-curriculum", "paired runs with and without the curriculum");
    CommonOptions curr_o;
    add_common(ablate_curr, curr_o);

    // project
    auto* project = app.add_subcommand("project", "t-SNE projection of touch embeddings");
    CommonOptions proj_o;
    std::string proj_split = "test";
    tlv::TsneOptions tsne;
    std::string proj_checkpoint;
    add_common(project, proj_o);
    project->add_option("--checkpoint", proj_checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);
    project->add_option("--split", proj_split, "split to project");
    project->add_option("--perplexity", tsne.perplexity, "t-SNE perplexity (capped at (n-1)/3)");
    project->add_option("--iterations", tsne.iterations, "t-SNE iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            RunRecord rec("gen", args);
            const fs::path out = prepare_out(gen_out);
            tlv::Dataset ds;
            if (gen_grasp) {
                tlv::GraspConfig g;
                g.num_materials = gen_materials;
                g.num_samples = gen_n;
                g.height = g.width = gen_size;
                g.seed = gen_seed;
                ds = tlv::generate_grasp(g);
                rec.set_config({{"grasp", true}, {"materials", gen_materials}, {"n", gen_n}, {"image_size", gen_size}});
            } else {
                tlv::SyntheticConfig s;
                s.num_classes = gen_m;
                s.num_samples = gen_n;
                s.height = s.width = gen_size;
                s.seed = gen_seed;
                s.corruption_rate = gen_corruption;
                s.train_fraction = gen_train;
                s.val_fraction = gen_val;
                ds = tlv::generate_synthetic(s);
                rec.set_config({{"m", gen_m},
                                {"n", gen_n},
                                {"image_size", gen_size},
                                {"corruption_rate", gen_corruption},
                                {"train_fraction", gen_train},
                                {"val_fraction", gen_val}});
            }
            tlv::write_dataset(out, ds);
            rec.set_seed(gen_seed);
            rec.artifact(out / "manifest.json");
            rec.artifact(out / "records.jsonl");
            rec.artifact(out / "images");
            rec.write(out);
            log("wrote " + std::to_string(ds.samples.size()) + " samples to " + out.string());
            return 0;
        }

        if (filter->parsed()) {
            if (filter_text.empty() == filter_data.empty()) {
                throw tlv::ValidationError("filter needs exactly one of --data or --text");
            }
            auto report_json = [](const tlv::FilterReport& r) {
                json defects = json::array(), spans = json::array();
                for (auto d : r.defects) defects.push_back(tlv::to_string(d));
                for (const auto& s : r.spans) {
                    spans.push_back({{"defect", tlv::to_string(s.defect)}, {"begin", s.begin}, {"end", s.end}});
                }
                return json{{"id", r.id},
                            {"verdict", r.flagged ? "flagged" : "clean"},
                            {"defects", defects},
                            {"spans", spans}};
            };
            if (!filter_text.empty()) {
                std::cout << report_json(tlv::pattern_filter(filter_text)).dump() << '\n';
                return 0;
            }
            if (filter_out.empty()) throw tlv::ValidationError("filter --data needs --out");
            RunRecord rec("filter", args);
            const fs::path out = prepare_out(filter_out);
            const tlv::Dataset ds = tlv::load_dataset(filter_data);
            std::vector<const tlv::Sample*> sorted;
            for (const auto& s : ds.samples) sorted.push_back(&s);
            std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
            std::ofstream f(out / "filter_reports.jsonl", std::ios::binary);
            std::size_t flagged = 0;
            for (const auto* s : sorted) {
                const auto r = tlv::pattern_filter(s->sentence_description, s->id);
                flagged += r.flagged;
                f << report_json(r).dump() << '\n';
            }
            rec.set_config({{"data", filter_data}});
            rec.artifact(out / "filter_reports.jsonl");
            rec.write(out);
            log(std::to_string(flagged) + " of " + std::to_string(sorted.size()) + " descriptions flagged");
            return 0;
        }

        if (curate->parsed()) {
            RunRecord rec("curate", args);
            const fs::path out = prepare_out(curate_out);
            const tlv::Dataset ds = tlv::load_dataset(curate_data);
            const auto judge = tlv::make_judge_from_env();
            const auto result = tlv::curate(ds, *judge, out / "correction_queue.jsonl");
            std::string clean;
            for (const auto& id : result.clean_ids) clean += id + "\n";
            write_text(out / "clean_ids.txt", clean);
            rec.set_config({{"data", curate_data}, {"judge", std::getenv("JUDGE_URL") ? "http" : "mock"}});
            rec.artifact(out / "correction_queue.jsonl");
            rec.artifact(out / "clean_ids.txt");
            rec.write(out);
            log(std::to_string(result.queue.size()) + " records queued for review, " +
                std::to_string(result.clean_ids.size()) + " clean");
            return 0;
        }

        if (train->parsed()) {
            RunRecord rec("train", args);
            tlv::RunConfig c = resolve_config(train_o);
            if (no_curriculum) c.train.schedule.enabled = false;
            if (symmetric) c.train.symmetric_loss = true;
            if (epochs) c.train.epochs = *epochs;
            if (batch_size) c.train.batch_size = *batch_size;
            if (lr) c.train.base_lr = *lr;
            if (warmup) c.train.warmup_steps = *warmup;
            if (beta_1) c.train.schedule.beta_1 = *beta_1;
            c.validate();
            const tlv::Dataset ds = require_dataset(c);
            const fs::path out = prepare_out(train_o.out);
            tlv::EncoderBundle bundle(c.model, c.lora, c.train.temperature, c.train.seed);
            tlv::TrainOptions options;
            options.split = c.data.probe_split;
            options.out_dir = out;
            options.metadata = {{"dataset", ds.manifest.name}};
            options.on_step = [](const tlv::StepResult& r) {
                if (r.step % 50 == 0) {
                    char buf[128];
                    std::snprintf(buf, sizeof buf, "step %lld loss %.4f beta %.3f lr %.2e", static_cast<long long>(r.step),
                                  r.loss, r.beta, r.lr);
                    log(buf);
                }
            };
            const auto result = tlv::train(bundle, ds, ds.manifest, c.train, options);
            json snapshot = tlv::to_json(c);
            snapshot["train"]["schedule"]["total_steps"] = result.schedule.total_steps;
            rec.set_config(snapshot);
            rec.set_seed(c.train.seed);
            rec.artifact(result.checkpoint);
            rec.artifact(result.metrics_csv);
            rec.write(out);
            log("trained " + std::to_string(result.metrics.size()) + " steps; checkpoint " + result.checkpoint.string());
            return 0;
        }

        for (auto* cmd : {probe, zeroshot, grasp}) {
            if (!cmd->parsed()) continue;
            RunRecord rec(cmd->get_name(), args);
            const tlv::RunConfig c = resolve_config(eval_o);
            const fs::path out = prepare_out(eval_o.out);
            const auto loaded = tlv::load_checkpoint(checkpoint);
            auto options = eval_options(c, checkpoint);
            json reports = json::array();
            auto run = [&](const tlv::Dataset& ds, tlv::Task task, tlv::Protocol protocol) {
                const auto r = tlv::evaluate(loaded.bundle, ds, task, protocol, options);
                char buf[128];
                std::snprintf(buf, sizeof buf, "%s %s: %.1f%%", tlv::to_string(task).c_str(),
                              tlv::to_string(protocol).c_str(), 100.0 * r.accuracy);
                log(buf);
                reports.push_back(tlv::to_json(r));
            };
            if (cmd == grasp) {
                const auto g = optional_grasp(c);
                if (!g) throw tlv::ConfigError("no grasp dataset given: pass --grasp-data or set [data].grasp_path");
                options.grasp_concat = grasp_concat;
                if (grasp_protocol != "zero_shot") run(*g, tlv::Task::grasp, tlv::Protocol::linear_probe);
                if (grasp_protocol != "linear_probe") run(*g, tlv::Task::grasp, tlv::Protocol::zero_shot);
            } else {
                const tlv::Dataset ds = require_dataset(c);
                const auto protocol = cmd == probe ? tlv::Protocol::linear_probe : tlv::Protocol::zero_shot;
                if (task_name == "all") {
                    for (auto t : {tlv::Task::material, tlv::Task::hard_soft, tlv::Task::rough_smooth}) run(ds, t, protocol);
                } else {
                    run(ds, tlv::parse_task(task_name), protocol);
                }
            }
            const fs::path report_path = out / (cmd->get_name() + "_report.json");
            write_json(report_path, reports);
            rec.set_config(tlv::to_json(c));
            rec.set_seed(c.train.seed);
            rec.artifact(report_path);
            rec.write(out);
            return 0;
        }

        if (ablate_scale->parsed()) {
            RunRecord rec("ablate-scale", args);
            const tlv::RunConfig c = resolve_config(scale_o);
            c.validate();
            const tlv::Dataset ds = require_dataset(c);
            const auto g = optional_grasp(c);
            const fs::path out = prepare_out(scale_o.out);
            const auto result = tlv::run_scale_ablation(ds, g ? &*g : nullptr, c);
            write_text(out / "scale_ablation.txt", result.format_table());
            write_json(out / "scale_ablation.json", result.to_json());
            std::cerr << result.format_table();
            rec.set_config(tlv::to_json(c));
            rec.set_seed(c.train.seed);
            rec.artifact(out / "scale_ablation.txt");
            rec.artifact(out / "scale_ablation.json");
            rec.write(out);
            return 0;
        }

        if (ablate_curr->parsed()) {
            RunRecord rec("ablate-curriculum", args);
            const tlv::RunConfig c = resolve_config(curr_o);
            c.validate();
            const tlv::Dataset ds = require_dataset(c);
            const auto g = optional_grasp(c);
            const fs::path out = prepare_out(curr_o.out);
            const auto result = tlv::run_curriculum_ablation(ds, g ? &*g : nullptr, c, out);
            write_text(out / "curriculum_ablation.txt", result.format_table());
            write_json(out / "curriculum_ablation.json", result.to_json());
            std::cerr << result.format_table();
            rec.set_config(tlv::to_json(c));
            rec.set_seed(c.train.seed);
            for (const char* run : {"with_curriculum", "without_curriculum"}) {
                rec.artifact(out / run / "checkpoint.bin");
                rec.artifact(out / run / "metrics.csv");
            }
            rec.artifact(out / "curriculum_ablation.txt");
            rec.artifact(out / "curriculum_ablation.json");
            rec.write(out);
            return 0;
        }

        if (project->parsed()) {
            RunRecord rec("project", args);
            const tlv::RunConfig c = resolve_config(proj_o);
            const tlv::Dataset ds = require_dataset(c);
            const fs::path out = prepare_out(proj_o.out);
            const auto loaded = tlv::load_checkpoint(proj_checkpoint);
            const auto samples = ds.split_samples(proj_split);
            const auto emb = tlv::touch_embeddings(loaded.bundle.touch, samples);
            std::vector<int> labels;
            for (const auto* s : samples) labels.push_back(s->labels.material);
            tsne.seed = c.train.seed;
            const auto coords = tlv::project_2d(emb.rows, tsne);
            tlv::write_projection_csv(out / "projection.csv", coords, labels);
            tlv::write_scatter_png(out / "projection.png", coords, labels);
            rec.set_config({{"run", tlv::to_json(c)},
                            {"split", proj_split},
                            {"perplexity", tsne.perplexity},
                            {"iterations", tsne.iterations}});
            rec.set_seed(c.train.seed);
            rec.artifact(out / "projection.csv");
            rec.artifact(out / "projection.png");
            rec.write(out);
            return 0;
        }
    } catch (const tlv::ValidationError& e) {
        log(std::string("error: ") + e.what());
        return 1;
    } catch (const std::exception& e) {
        log(std::string("failure: ") + e.what());
        return 2;
    }
    return 1;
}
