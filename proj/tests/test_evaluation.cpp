#include "test_util.hpp"

#include "tlv/error.hpp"
#include "tlv/evaluation.hpp"
#include "tlv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace tlv;
using test_util::TempDir;

namespace {

Eigen::MatrixXd random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Brute-force cosine argmax with the lowest-index tie rule.
int cosine_oracle(const Eigen::VectorXd& q, const Eigen::MatrixXd& classes) {
    int best = 0;
    double best_sim = -2.0;
    for (Eigen::Index c = 0; c < classes.rows(); ++c) {
        double dot = 0.0, nq = 0.0, nc = 0.0;
        for (Eigen::Index j = 0; j < q.size(); ++j) {
            dot += q(j) * classes(c, j);
            nq += q(j) * q(j);
            nc += classes(c, j) * classes(c, j);
        }
        const double sim = dot / std::sqrt(nq * nc);
        if (sim > best_sim) {
            best_sim = sim;
            best = static_cast<int>(c);
        }
    }
    return best;
}

EvalReport report_with_accuracy(Task task, Protocol protocol, int correct, int total, int classes) {
    std::vector<int> truth(static_cast<std::size_t>(total), 0), predicted(static_cast<std::size_t>(total), 0);
    for (int i = correct; i < total; ++i) predicted[static_cast<std::size_t>(i)] = 1;
    return make_report(task, protocol, truth, predicted, classes);
}

} // namespace

TEST_CASE("report accuracy equals the confusion trace ratio") {
    const std::vector<int> truth{0, 1, 2, 2, 1, 0, 2};
    const std::vector<int> pred{0, 2, 2, 2, 1, 1, 0};
    const auto r = make_report(Task::material, Protocol::zero_shot, truth, pred, 3);
    CHECK(r.total() == 7);
    CHECK(r.correct() == 4);
    CHECK(r.accuracy == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
    CHECK(r.confusion[1][2] == 1);
    CHECK(r.confusion[2][0] == 1);
    CHECK(to_json(r).at("accuracy") == r.accuracy);

    CHECK_THROWS_AS(make_report(Task::material, Protocol::zero_shot, truth, std::vector<int>{0}, 3), ShapeError);
    CHECK_THROWS_AS(make_report(Task::material, Protocol::zero_shot, truth, pred, 2), DomainError);
    CHECK(parse_task("rough_smooth") == Task::rough_smooth);
    CHECK_THROWS_AS(parse_task("texture"), ValidationError);
}

TEST_CASE("linear probe separates separable data") {
    Rng rng(1);
    const int n = 120;
    Eigen::MatrixXd x(n, 5);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        const int c = i % 4;
        labels[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < 5; ++j) x(i, j) = 0.2 * rng.normal() + (j == c ? 3.0 : 0.0);
    }
    const auto probe = LinearProbe::fit(x, labels, 4);
    CHECK(probe.final_grad_norm() <= 1e-6);
    const auto pred = probe.predict(x);
    CHECK(std::equal(pred.begin(), pred.end(), labels.begin()));

    const EmbeddingBatch emb{x, false};
    CHECK(linear_probe(emb, labels, emb, labels, 4, Task::material).accuracy == 1.0);
}

TEST_CASE("linear probe on shuffled labels sits at chance") {
    double total = 0.0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(100 + static_cast<std::uint64_t>(seed));
        const Eigen::MatrixXd train = random_mat(rng, 80, 6);
        const Eigen::MatrixXd test = random_mat(rng, 400, 6);
        std::vector<int> ytrain(80), ytest(400);
        for (auto& y : ytrain) y = static_cast<int>(rng.below(4));
        for (auto& y : ytest) y = static_cast<int>(rng.below(4));
        total += linear_probe(EmbeddingBatch{train, false}, ytrain, EmbeddingBatch{test, false}, ytest, 4,
                              Task::material)
                     .accuracy;
    }
    CHECK(std::abs(total / seeds - 0.25) <= 0.05);
}

TEST_CASE("linear probe rejects degenerate training data") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 3);
    CHECK_THROWS_AS(LinearProbe::fit(x, std::vector<int>{1, 1, 1, 1}, 2), DegenerateDataError);
    CHECK_THROWS_AS(LinearProbe::fit(Eigen::MatrixXd(0, 3), std::vector<int>{}, 2), DegenerateDataError);
    CHECK_THROWS_AS(LinearProbe::fit(x, std::vector<int>{0, 1}, 2), ShapeError);
}

TEST_CASE("chance predictor matches the uniform rate") {
    std::vector<int> truth20(10000), truth2(10000);
    for (std::size_t i = 0; i < truth20.size(); ++i) {
        truth20[i] = static_cast<int>(i % 20);
        truth2[i] = static_cast<int>(i % 2);
    }
    const auto r20 = chance_report(Task::material, truth20, 20, 0);
    CHECK(std::abs(r20.accuracy - 0.05) <= 0.02);
    for (Task t : {Task::hard_soft, Task::rough_smooth, Task::grasp}) {
        CHECK(std::abs(chance_report(t, truth2, 2, 0).accuracy - 0.5) <= 0.02);
    }
    CHECK(chance_report(Task::material, truth20, 20, 4).confusion == chance_report(Task::material, truth20, 20, 4).confusion);
}

TEST_CASE("zero-shot classification by cosine") {
    const EmbeddingBatch classes{Eigen::MatrixXd::Identity(3, 3), true};
    Eigen::VectorXd q(3);
    q << 0.1, 0.9, 0.2;
    CHECK(zero_shot_classify(q, classes) == 1); // second class, zero-based
    CHECK(cosine_oracle(q, classes.rows) == 1);
    CHECK(zero_shot_classify(Eigen::VectorXd(classes.rows.row(2).transpose()), classes) == 2);
    CHECK(zero_shot_classify(Eigen::VectorXd(10.0 * q), classes) == 1);

    Eigen::VectorXd tie(3);
    tie << 0.5, 0.5, 0.0;
    CHECK(zero_shot_classify(tie, classes) == 0);
}

TEST_CASE("zero-shot argmax is scale invariant and matches brute force") {
    Rng rng(2);
    const Eigen::MatrixXd raw = random_mat(rng, 6, 8);
    const EmbeddingBatch classes = EmbeddingBatch::normalize(raw);
    const EmbeddingBatch scaled{3.7 * classes.rows, false};
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::VectorXd q = random_mat(rng, 8, 1);
        const int c = zero_shot_classify(q, classes);
        CHECK(c == cosine_oracle(q, raw));
        CHECK(zero_shot_classify(Eigen::VectorXd(rng.uniform(1e-3, 1e3) * q), classes) == c);
        CHECK(zero_shot_classify(q, scaled) == c);
    }
}

TEST_CASE("prompt templates are validated") {
    PromptTemplateSet p = PromptTemplateSet::defaults({"rough", "smooth"});
    CHECK(p.templates.size() == 3);
    CHECK_NOTHROW(p.validate());
    p.templates = {};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.templates = {"no slot here"};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.templates = {"{label} and {label}"};
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("class prompt embeddings average normalized templates") {
    EncoderConfig cfg;
    cfg.text_width = 16;
    cfg.text_heads = 2;
    cfg.text_depth = 1;
    cfg.embed_dim = 8;
    const TextEncoder text(cfg, false, 1);
    const auto prompts = PromptTemplateSet::defaults({"rough", "smooth"});
    const auto classes = class_prompt_embeddings(prompts, text);
    REQUIRE(classes.size() == 2);
    CHECK(classes.normalized);
    for (int c = 0; c < 2; ++c) {
        std::vector<std::string> filled;
        for (const auto& t : prompts.templates) {
            std::string s = t;
            s.replace(s.find("{label}"), 7, prompts.labels[static_cast<std::size_t>(c)]);
            filled.push_back(s);
        }
        const Eigen::MatrixXd rows = test_util::normalized_rows(text.encode(filled).rows);
        const Eigen::RowVectorXd mean = rows.colwise().mean().normalized();
        CHECK((classes.rows.row(c) - mean).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(zero_shot_classify(Eigen::VectorXd(mean.transpose()), prompts, text) == c);
    }
}

TEST_CASE("grasp pooling averages four frames") {
    Eigen::VectorXd a(2), b(2), c(2), d(2);
    a << 1.0, 0.0;
    b << 0.0, 1.0;
    c << 1.0, 1.0;
    d << 2.0, 0.0;
    const std::vector<Eigen::VectorXd> frames{a, b, c, d};
    const Eigen::VectorXd pooled = pool_grasp(frames);
    // Mean (1, 0.5), norm sqrt(1.25).
    CHECK(pooled(0) == doctest::Approx(1.0 / std::sqrt(1.25)).epsilon(1e-15));
    CHECK(pooled(1) == doctest::Approx(0.5 / std::sqrt(1.25)).epsilon(1e-15));
    const std::vector<Eigen::VectorXd> permuted{d, c, a, b};
    CHECK((pool_grasp(permuted) - pooled).cwiseAbs().maxCoeff() < 1e-15);
    const std::vector<Eigen::VectorXd> same{c, c, c, c};
    CHECK((pool_grasp(same) - c.normalized()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(pool_grasp(std::vector<Eigen::VectorXd>{a, b, c}), ValidationError);
}

TEST_CASE("task labels and zero-shot label words") {
    SyntheticConfig cfg;
    cfg.num_samples = 8;
    const Dataset ds = generate_synthetic(cfg);
    CHECK(task_num_classes(Task::material, ds.manifest) == 4);
    CHECK(task_num_classes(Task::hard_soft, ds.manifest) == 2);
    CHECK(zero_shot_labels(Task::material, ds.manifest) == ds.manifest.class_names);
    CHECK(zero_shot_labels(Task::hard_soft, ds.manifest).size() == 2);
    const Sample& s = ds.samples.front();
    CHECK(task_label(s, Task::material) == s.labels.material);
    CHECK_THROWS_AS(task_label(s, Task::grasp), ValidationError);
}

TEST_CASE("t-SNE projection shape, duplicates and determinism") {
    Rng rng(3);
    Eigen::MatrixXd x(40, 6);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
        labels[static_cast<std::size_t>(i)] = i % 4;
        for (int j = 0; j < 6; ++j) x(i, j) = rng.normal() + 4.0 * (j == i % 4);
    }
    x.row(39) = x.row(38);
    TsneOptions opts;
    opts.iterations = 400;
    opts.seed = 7;
    const Eigen::MatrixXd y = project_2d(x, opts);
    REQUIRE(y.rows() == 40);
    REQUIRE(y.cols() == 2);
    CHECK(y.allFinite());
    const double extent = (y.colwise().maxCoeff() - y.colwise().minCoeff()).maxCoeff();
    CHECK((y.row(39) - y.row(38)).norm() < 1e-3 * extent);

    TempDir dir("tsne");
    write_projection_csv(dir / "a.csv", y, labels);
    write_projection_csv(dir / "b.csv", project_2d(x, opts), labels);
    CHECK(test_util::read_file(dir / "a.csv") == test_util::read_file(dir / "b.csv"));
    CHECK(test_util::read_file(dir / "a.csv").rfind("x,y,label\n", 0) == 0);
    write_scatter_png(dir / "plot.png", y, labels);
    const Image img = read_png(dir / "plot.png");
    CHECK(img.width == 480);

    CHECK_THROWS_AS(project_2d(Eigen::MatrixXd::Ones(9, 3)), ValidationError);
}

TEST_CASE("benchmark table layout") {
    BenchmarkRow lp{"TLV-Link", report_with_accuracy(Task::material, Protocol::linear_probe, 672, 1000, 20),
                    report_with_accuracy(Task::hard_soft, Protocol::linear_probe, 931, 1000, 2),
                    report_with_accuracy(Task::rough_smooth, Protocol::linear_probe, 847, 1000, 2),
                    report_with_accuracy(Task::grasp, Protocol::linear_probe, 945, 1000, 2)};
    BenchmarkRow zs{"TLV-Link", report_with_accuracy(Task::material, Protocol::zero_shot, 700, 1000, 20),
                    std::nullopt, std::nullopt, std::nullopt};
    test_util::check_golden("benchmark_table.txt", format_benchmark_table({lp}, {zs}, 20));
}

TEST_CASE("scale ablation table layout") {
    ScaleAblation ab;
    ab.dataset_name = "synthetic";
    int k = 0;
    for (double f : kScaleFractions) {
        ScaleRow row;
        row.fraction = f;
        row.train_size = static_cast<std::size_t>(200 * f);
        row.material_probe = report_with_accuracy(Task::material, Protocol::linear_probe, 50 + k, 100, 4);
        row.material_zero_shot = report_with_accuracy(Task::material, Protocol::zero_shot, 30 + k, 100, 4);
        row.grasp_probe = report_with_accuracy(Task::grasp, Protocol::linear_probe, 60 + k, 100, 2);
        row.grasp_zero_shot = report_with_accuracy(Task::grasp, Protocol::zero_shot, 40 + k, 100, 2);
        ab.rows.push_back(row);
        k += 5;
    }
    test_util::check_golden("scale_table.txt", ab.format_table());
    CHECK(ab.to_json().at("rows").size() == 4);
}

TEST_CASE("curriculum ablation table layout") {
    CurriculumAblation ab;
    ab.with_probe = {"TLV-Link", report_with_accuracy(Task::material, Protocol::linear_probe, 90, 100, 4),
                     report_with_accuracy(Task::hard_soft, Protocol::linear_probe, 95, 100, 2),
                     report_with_accuracy(Task::rough_smooth, Protocol::linear_probe, 97, 100, 2),
                     report_with_accuracy(Task::grasp, Protocol::linear_probe, 80, 100, 2)};
    ab.without_probe = {"w/o", report_with_accuracy(Task::material, Protocol::linear_probe, 88, 100, 4),
                        report_with_accuracy(Task::hard_soft, Protocol::linear_probe, 96, 100, 2),
                        report_with_accuracy(Task::rough_smooth, Protocol::linear_probe, 90, 100, 2),
                        report_with_accuracy(Task::grasp, Protocol::linear_probe, 75, 100, 2)};
    ab.with_zero_shot = {"TLV-Link", report_with_accuracy(Task::material, Protocol::zero_shot, 40, 100, 4),
                         report_with_accuracy(Task::hard_soft, Protocol::zero_shot, 60, 100, 2),
                         report_with_accuracy(Task::rough_smooth, Protocol::zero_shot, 55, 100, 2),
                         report_with_accuracy(Task::grasp, Protocol::zero_shot, 50, 100, 2)};
    ab.without_zero_shot = {"w/o", report_with_accuracy(Task::material, Protocol::zero_shot, 35, 100, 4),
                            report_with_accuracy(Task::hard_soft, Protocol::zero_shot, 61, 100, 2),
                            report_with_accuracy(Task::rough_smooth, Protocol::zero_shot, 50, 100, 2),
                            report_with_accuracy(Task::grasp, Protocol::zero_shot, 52, 100, 2)};
    test_util::check_golden("curriculum_table.txt", ab.format_table());
}
