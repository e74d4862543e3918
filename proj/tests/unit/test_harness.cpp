// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tiedaug/errors.hpp"
#include "tiedaug/harness.hpp"

using namespace tiedaug;

namespace {

const char* kSmallBlobs = R"(
# four-class blobs, tiny mlp
dataset.kind = blobs
dataset.size = 200
dataset.classes = 4
dataset.dim = 6
dataset.noise = 0.05
dataset.seed = 5
model.kind = mlp
model.hidden = 8
model.feature_dim = 6
augment1.kind = gaussian_noise
augment1.sigma = 0.05
augment2.kind = gaussian_noise
augment2.sigma = 0.05
optim.lr = 0.1
train.epochs = 2
train.batch_size = 16
train.seeds = 3
)";

const char* kSmallStriped = R"(
dataset.kind = striped_images
dataset.size = 120
dataset.classes = 3
dataset.channels = 1
dataset.height = 8
dataset.width = 8
dataset.seed = 2
model.kind = small_conv
model.conv_channels = 2,3
model.feature_dim = 5
augment1.kind = crop_flip
augment2.kind = randaugment
train.epochs = 1
train.batch_size = 20
)";

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig with(const char* base, const std::string& extra) { return parse_config(base + ("\n" + extra)); }

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = parse_config(kSmallBlobs);
    CHECK(cfg.dataset.kind == DatasetKind::blobs);
    CHECK(cfg.dataset.image == Shape{1, 1, 6});
    CHECK(cfg.model.input == Shape{1, 1, 6});
    CHECK(cfg.model.classes == 4);
    CHECK(cfg.model.hidden == std::vector<std::size_t>{8});
    CHECK(cfg.augment1.kind == AugmentKind::gaussian_noise);
    CHECK(cfg.augment1.pad == 0);  // kind defaults, not crop_flip's
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3});
    CHECK(cfg.mode() == TrainingMode::tied);
    CHECK_NOTHROW(cfg.validate());

    SUBCASE("unknown keys name the line") {
        try {
            (void)parse_config("dataset.kind = blobs\ntied.wieght = 3\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
            CHECK(std::string(e.what()).find("tied.wieght") != std::string::npos);
        }
    }
    SUBCASE("malformed values and lines") {
        CHECK_THROWS_AS((void)parse_config("train.epochs = ten"), ConfigError);
        CHECK_THROWS_AS((void)parse_config("train.epochs"), ConfigError);
        CHECK_THROWS_AS((void)parse_config("train.epochs = 1\ntrain.epochs = 2"), ConfigError);
        CHECK_THROWS_AS((void)parse_config("model.activation = sigmoid"), ConfigError);
    }
    SUBCASE("invariants are checked by validate") {
        CHECK_THROWS_AS(with(kSmallBlobs, "train.epochs = 0").validate(), ConfigError);
        CHECK_THROWS_AS(with(kSmallBlobs, "mixup.enabled = true\nfixmatch.enabled = true\ndataset.labels_per_class = 5")
                            .validate(),
                        ConfigError);
        CHECK_THROWS_AS(with(kSmallBlobs, "fixmatch.enabled = true").validate(), ConfigError);
        CHECK_THROWS_AS(with(kSmallBlobs, "augment1.kind = crop_flip").validate(), ConfigError);
    }
    SUBCASE("every documented key is accepted") {
        CHECK(config_keys().size() > 50);
        for (const auto& k : config_keys()) CHECK(k.find('.') != std::string::npos);
    }
    SUBCASE("missing file is an IO error") {
        CHECK_THROWS_AS((void)load_config("/nonexistent/tiedaug.conf"), IoError);
    }
}

TEST_CASE("training with zero epochs is rejected before any work") {
    TempDir tmp("tiedaug_test_harness_epochs");
    CHECK_THROWS_AS((void)train(with(kSmallBlobs, "train.epochs = 0"), tmp.path), ConfigError);
    CHECK_FALSE(std::filesystem::exists(tmp.path / "metrics.csv"));
}

TEST_CASE("w = 0 with identical views gives ce1 == ce2 every step") {
    auto cfg = with(kSmallBlobs, "tied.weight = 0");
    cfg.augment1 = cfg.augment2 = AugmentSpec::identity();
    for (auto mode : {ForwardMode::separate, ForwardMode::concatenated}) {
        cfg.forward_mode = mode;
        const auto data = load_dataset(cfg.dataset);
        const auto run = train_seed(cfg, data, 0);
        for (const auto& row : run.rows) {
            REQUIRE(row.ce2.has_value());
            CHECK(row.ce1 == *row.ce2);
            CHECK(row.train_total == row.ce1);
        }
    }
}

TEST_CASE("separate and concatenated forwards give the same trajectory") {
    auto cfg = parse_config(kSmallStriped);
    const auto data = load_dataset(cfg.dataset);
    cfg.forward_mode = ForwardMode::separate;
    const auto a = train_seed(cfg, data, 4);
    cfg.forward_mode = ForwardMode::concatenated;
    const auto b = train_seed(cfg, data, 4);
    REQUIRE(a.step_losses.size() == b.step_losses.size());
    for (std::size_t i = 0; i < a.step_losses.size(); ++i)
        CHECK(std::fabs(a.step_losses[i] - b.step_losses[i]) <= 1e-12);
}

TEST_CASE("train writes bitwise-reproducible metrics and checkpoints") {
    TempDir tmp("tiedaug_test_harness_det");
    auto cfg = with(kSmallBlobs, "");
    cfg.seeds = {3, 1};
    cfg.threads = 2;
    const auto s1 = train(cfg, tmp.path / "a");
    cfg.threads = 1;
    const auto s2 = train(cfg, tmp.path / "b");
    CHECK(s1.final_accuracy == s2.final_accuracy);
    CHECK(s1.rows.size() == 4);
    const std::string m1 = slurp(tmp.path / "a" / "metrics.csv");
    CHECK(m1 == slurp(tmp.path / "b" / "metrics.csv"));
    CHECK(m1.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(slurp(tmp.path / "a" / "seed_3" / "model.ckpt") == slurp(tmp.path / "b" / "seed_3" / "model.ckpt"));
    // Seed order follows the config, not completion order.
    CHECK(m1.find("\n3,1,") < m1.find("\n1,1,"));

    SUBCASE("evaluate reproduces the final accuracy") {
        const double acc = evaluate_checkpoint(cfg, tmp.path / "a" / "seed_3" / "model.ckpt");
        CHECK(acc == s1.final_accuracy[0]);
        CHECK(acc == evaluate_checkpoint(cfg, tmp.path / "a" / "seed_3" / "model.ckpt"));
    }
    SUBCASE("a checkpoint for a different model is a format error") {
        auto other = cfg;
        other.model.hidden = {5};
        CHECK_THROWS_AS((void)evaluate_checkpoint(other, tmp.path / "a" / "seed_3" / "model.ckpt"), FormatError);
    }
    SUBCASE("duplicate seeds are rejected") {
        cfg.seeds = {1, 1};
        CHECK_THROWS_AS((void)train(cfg, std::nullopt), ConfigError);
    }
}

TEST_CASE("metrics rows use 17 significant digits and blank optional fields") {
    MetricsRow r;
    r.seed = 2;
    r.epoch = 1;
    r.train_total = 0.1;
    r.ce1 = 1.0 / 3.0;
    const std::string line = format_metrics_row(r);
    CHECK(line.find("0.10000000000000001") != std::string::npos);
    CHECK(line.find("0.33333333333333331") != std::string::npos);
    CHECK(line.find(",,") != std::string::npos);
}

TEST_CASE("a label-independent model scores 0.1 on a balanced ten-class set") {
    ModelSpec s;
    s.input = {1, 1, 8};
    s.hidden = {16};
    s.classes = 10;
    const Model m = Model::build(s, 9);
    Rng rng(10);
    std::vector<double> px(10000 * 8);
    for (double& v : px) v = uniform01(rng);
    ImageBatch split{Tensor::from({10000, 1, 1, 8}, px), {}};
    for (int i = 0; i < 10000; ++i) split.labels.push_back(i % 10);
    const double acc = accuracy(m, split);
    CHECK(std::fabs(acc - 0.1) <= 0.01);
    CHECK(acc == accuracy(m, split));
}

TEST_CASE("noise-free blobs are learned perfectly") {
    auto cfg = with(kSmallBlobs, "tied.weight = 0");
    cfg.dataset.noise = 0.0;
    cfg.augment1 = cfg.augment2 = AugmentSpec::identity();
    cfg.epochs = 30;
    const auto run = train_seed(cfg, load_dataset(cfg.dataset), 0);
    CHECK(run.rows.back().test_accuracy == 1.0);
}

TEST_CASE("mixup, fixmatch and sam modes train and log their fields") {
    SUBCASE("mixup") {
        auto cfg = with(kSmallBlobs, "mixup.enabled = true\nmixup.alpha = 0.4\nmixup.weight = 2");
        CHECK(cfg.mode() == TrainingMode::mixup);
        const auto run = train_seed(cfg, load_dataset(cfg.dataset), 1);
        CHECK(std::isfinite(run.rows.back().train_total));
        CHECK_FALSE(run.rows.back().mask_rate.has_value());
    }
    SUBCASE("fixmatch") {
        auto cfg = with(kSmallBlobs,
                        "fixmatch.enabled = true\ndataset.labels_per_class = 5\nfixmatch.ratio = 3\n"
                        "fixmatch.threshold = 0.5\nweak.kind = gaussian_noise\nweak.sigma = 0.02\n"
                        "strong.kind = gaussian_noise\nstrong.sigma = 0.2");
        CHECK(cfg.mode() == TrainingMode::fixmatch);
        const auto data = load_dataset(cfg.dataset);
        const auto split = labeled_split(cfg, data.train);
        CHECK(split.labeled.size() == 20);
        const auto run = train_seed(cfg, data, 1);
        REQUIRE(run.rows.back().mask_rate.has_value());
        CHECK(*run.rows.back().mask_rate >= 0.0);
        CHECK(*run.rows.back().mask_rate <= 1.0);
    }
    SUBCASE("tied sam") {
        auto cfg = with(kSmallBlobs, "sam.enabled = true\nsam.rho = 0.05\nsam.first_step = negated");
        REQUIRE(cfg.sam.has_value());
        const auto run = train_seed(cfg, load_dataset(cfg.dataset), 1);
        CHECK(std::isfinite(run.rows.back().train_total));
    }
}

TEST_CASE("grad-check sweep stays under tolerance") {
    const auto report = run_grad_check(22, 0);
    CHECK(report.trials.size() == 22);
    CHECK(report.max_relative_error <= 1e-4);
}

TEST_CASE("verify_taylor writes the CSV") {
    TempDir tmp("tiedaug_test_harness_taylor");
    auto cfg = with(kSmallBlobs, "model.activation = identity\ntaylor.samples = 2000\ntaylor.probes = 2");
    cfg.model.hidden.clear();
    const auto report = verify_taylor(cfg);
    CHECK(report.affine_model);
    CHECK(report.consistent);
    write_taylor_csv(report, tmp.path / "t.csv");
    const std::string csv = slurp(tmp.path / "t.csv");
    CHECK(csv.rfind("probe_index,sigma,mc_estimate,std_error,taylor_prediction,relative_gap\n", 0) == 0);

    cfg.model.activation = Activation::relu;
    CHECK_THROWS_AS((void)verify_taylor(cfg), ConfigError);
}

TEST_CASE("make_data writes train, test and label files") {
    TempDir tmp("tiedaug_test_harness_data");
    const auto cfg = with(kSmallBlobs, "dataset.labels_per_class = 4");
    make_data(cfg, tmp.path / "d.bin");
    const auto train_back = read_binary(tmp.path / "d.bin", cfg.dataset.image, 4);
    CHECK(train_back.size() == 160);
    CHECK(read_binary(tmp.path / "d.bin.test", cfg.dataset.image, 4).size() == 40);
    CHECK(read_label_file(tmp.path / "d.bin.labels").size() == 16);
}
