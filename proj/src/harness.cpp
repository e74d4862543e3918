// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "tiedaug/errors.hpp"
#include "tiedaug/grad_check.hpp"
#include "tiedaug/log.hpp"

namespace tiedaug {

namespace {

// Stream tags for derive_rng so each consumer of randomness is independent.
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kTrainStream = 0x74726e;
constexpr std::uint64_t kLabelStream = 0x6c626c;
constexpr std::uint64_t kProbeStream = 0x707262;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

double mean_sq_distance(const Tensor& a, const Tensor& b) {
    const auto x = a.data(), y = b.data();
    if (a.dim(0) == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s / static_cast<double>(a.dim(0));
}

// Per-epoch running means of the logged quantities.
struct EpochAccumulator {
    double total = 0, ce1 = 0, ce2 = 0, similarity = 0, distance = 0, mask = 0;
    bool has_ce2 = false, has_mask = false;
    std::size_t steps = 0;

    void add(const TiedLossBreakdown& b, std::optional<double> mask_rate) {
        total += b.total;
        ce1 += b.ce1;
        if (b.ce2) {
            ce2 += *b.ce2;
            has_ce2 = true;
        }
        similarity += b.similarity_penalty;
        distance += b.feature_distance_l2;
        if (mask_rate) {
            mask += *mask_rate;
            has_mask = true;
        }
        ++steps;
    }

    MetricsRow row(std::uint64_t seed, std::size_t epoch) const {
        const double n = static_cast<double>(std::max<std::size_t>(1, steps));
        MetricsRow r;
        r.seed = seed;
        r.epoch = epoch;
        r.train_total = total / n;
        r.ce1 = ce1 / n;
        if (has_ce2) r.ce2 = ce2 / n;
        r.similarity_penalty = similarity / n;
        r.feature_distance_l2 = distance / n;
        if (has_mask) r.mask_rate = mask / n;
        return r;
    }
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

struct StepOutcome {
    TiedLossBreakdown breakdown;
    std::optional<double> mask_rate;
};

// One optimizer update on a fixed objective, plain or SAM.
StepOutcome optimize(const ExperimentConfig& cfg, Model& model, Sgd& sgd, std::size_t step,
                     const SamObjective& objective, const std::optional<double>* mask_rate) {
    StepOutcome out;
    if (cfg.sam) {
        out.breakdown = sam_step(model.parameters(), objective, *cfg.sam, sgd, step).breakdown;
    } else {
        model.zero_grad();
        TiedLoss loss = objective(1.0);
        backward(loss.total);
        out.breakdown = loss.breakdown;
        sgd.step(model.parameters(), step);
    }
    if (mask_rate) out.mask_rate = *mask_rate;
    return out;
}

std::size_t steps_per_epoch(const ExperimentConfig& cfg, const Dataset& data, const LabelSplit* split) {
    if (cfg.mode() == TrainingMode::fixmatch)
        return std::max<std::size_t>(1, ceil_div(split->unlabeled.size(), cfg.batch_size * cfg.fixmatch->config.ratio));
    return ceil_div(data.train.size(), cfg.batch_size);
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
    std::string s = std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," + fmt17(r.train_total) + "," +
                    fmt17(r.ce1) + "," + (r.ce2 ? fmt17(*r.ce2) : "") + "," + fmt17(r.similarity_penalty) + "," +
                    fmt17(r.feature_distance_l2) + "," + (r.mask_rate ? fmt17(*r.mask_rate) : "") + "," +
                    fmt17(r.test_accuracy) + "," + fmt17(r.wall_ms);
    return s;
}

void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open metrics file for writing: " + path.string());
    f << kMetricsHeader << '\n';
    for (const auto& r : rows) f << format_metrics_row(r) << '\n';
    if (!f) throw IoError("failed writing metrics file: " + path.string());
}

double accuracy(const Model& model, const ImageBatch& split) {
    if (split.size() == 0) return 0.0;
    NoGradGuard no_grad;
    constexpr std::size_t kChunk = 1024;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < split.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, split.size() - start);
        const Tensor logits = model.forward(slice_rows(split.pixels, start, start + count)).logits;
        const std::vector<int> predicted = argmax_rows(logits);
        for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == split.labels[start + i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

LabelSplit labeled_split(const ExperimentConfig& cfg, const ImageBatch& train) {
    if (!cfg.fixmatch || cfg.fixmatch->label_file.empty()) {
        if (!cfg.dataset.labels_per_class) throw ConfigError("labeled_split: no label budget configured");
        Rng rng = derive_rng(cfg.dataset.seed, kLabelStream);
        return subset_labels(train, *cfg.dataset.labels_per_class, cfg.dataset.classes, rng);
    }
    const std::vector<std::size_t> listed = read_label_file(cfg.fixmatch->label_file);
    std::set<std::size_t> labeled;
    for (std::size_t i : listed) {
        if (i >= train.size())
            throw FormatError("label file index " + std::to_string(i) + " is outside the " +
                              std::to_string(train.size()) + "-example training split");
        if (!labeled.insert(i).second) throw FormatError("label file repeats index " + std::to_string(i));
    }
    if (labeled.empty()) throw FormatError("label file lists no examples");
    LabelSplit split;
    split.labeled.assign(labeled.begin(), labeled.end());
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!labeled.count(i)) split.unlabeled.push_back(i);
    return split;
}

SeedRun train_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
    cfg.validate();
    data.train.validate(cfg.dataset.classes);
    const std::uint64_t init_seed = derive_rng(cfg.model_seed ^ kInitStream, seed)();
    SeedRun run{seed, {}, {}, Model::build(cfg.model, init_seed)};
    Model& model = run.model;
    Rng rng = derive_rng(seed, kTrainStream);

    std::optional<LabelSplit> split;
    if (cfg.mode() == TrainingMode::fixmatch) split = labeled_split(cfg, data.train);
    const std::size_t per_epoch = steps_per_epoch(cfg, data, split ? &*split : nullptr);

    SgdConfig sgd_cfg = cfg.optimizer;
    sgd_cfg.total_steps = per_epoch * cfg.epochs;
    Sgd sgd(sgd_cfg);

    // FixMatch draws labeled batches by cycling a reshuffled list.
    std::vector<std::size_t> labeled_order;
    std::size_t labeled_pos = 0;
    auto next_labeled = [&](std::size_t count) {
        std::vector<std::size_t> out;
        while (out.size() < count) {
            if (labeled_pos == labeled_order.size()) {
                labeled_order = split->labeled;
                std::shuffle(labeled_order.begin(), labeled_order.end(), rng);
                labeled_pos = 0;
            }
            out.push_back(labeled_order[labeled_pos++]);
        }
        return out;
    };

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        EpochAccumulator acc;
        const std::size_t pool = split ? split->unlabeled.size() : data.train.size();
        const std::vector<std::size_t> order = shuffled_indices(pool, rng);
        const std::size_t chunk = split ? cfg.batch_size * cfg.fixmatch->config.ratio : cfg.batch_size;

        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t begin = std::min(b * chunk, order.size());
            const std::size_t end = std::min(begin + chunk, order.size());
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            StepOutcome outcome;

            switch (cfg.mode()) {
                case TrainingMode::tied: {
                    const ImageBatch batch = data.train.select(idx);
                    const ViewPair views = make_views(cfg.augment1, cfg.augment2, batch, cfg.crop_mode, rng);
                    const Tensor inputs[] = {views.view1.pixels, views.view2.pixels};
                    const SamObjective objective = [&](double sign) {
                        TiedLossConfig tied = cfg.tied;
                        tied.tied_weight *= sign;
                        const auto outs = forward_views(model, inputs, cfg.forward_mode);
                        return tied_loss(outs[0], outs[1], batch.labels, tied);
                    };
                    outcome = optimize(cfg, model, sgd, step, objective, nullptr);
                    break;
                }
                case TrainingMode::mixup: {
                    const ImageBatch batch = apply(cfg.augment1, data.train.select(idx), rng);
                    const MixupBatch mixed = mixup_batch(batch, cfg.mixup->alpha, rng);
                    const Tensor inputs[] = {batch.pixels, mixed.partner, mixed.mixed};
                    const SamObjective objective = [&](double sign) {
                        const auto outs = forward_views(model, inputs, cfg.forward_mode);
                        return tied_mixup_loss(outs[0], outs[1], outs[2], mixed.labels1, mixed.labels2, mixed.lambda,
                                               cfg.mixup->tied_weight * sign);
                    };
                    outcome = optimize(cfg, model, sgd, step, objective, nullptr);
                    break;
                }
                case TrainingMode::fixmatch: {
                    const FixMatchConfig& fm = cfg.fixmatch->config;
                    const ImageBatch labeled_raw = data.train.select(next_labeled(cfg.batch_size));
                    const ImageBatch unlabeled_raw = data.train.select(idx);
                    const ImageBatch labeled = apply(fm.weak, labeled_raw, rng);
                    const ImageBatch weak = apply(fm.weak, unlabeled_raw, rng);
                    const ImageBatch strong = apply(fm.strong, unlabeled_raw, rng);
                    const Tensor inputs[] = {labeled.pixels, weak.pixels, strong.pixels};
                    std::optional<double> mask_rate;
                    const SamObjective objective = [&](double sign) {
                        FixMatchConfig c = fm;
                        c.tied_weight *= sign;
                        const auto outs = forward_views(model, inputs, cfg.forward_mode);
                        FixMatchLoss loss = tied_fixmatch_loss(outs[0], labeled.labels, outs[1], outs[2], c);
                        mask_rate = loss.breakdown.mask_rate;
                        TiedLoss t{loss.total, {}};
                        t.breakdown.total = loss.breakdown.total;
                        t.breakdown.supervised = loss.breakdown.supervised;
                        t.breakdown.ce1 = loss.breakdown.supervised;
                        t.breakdown.ce2 = loss.breakdown.unlabeled;
                        t.breakdown.similarity_penalty = loss.breakdown.similarity_masked;
                        t.breakdown.feature_distance_l2 = mean_sq_distance(outs[1].features, outs[2].features);
                        return t;
                    };
                    outcome = optimize(cfg, model, sgd, step, objective, &mask_rate);
                    break;
                }
            }
            acc.add(outcome.breakdown, outcome.mask_rate);
            run.step_losses.push_back(outcome.breakdown.total);
        }

        MetricsRow row = acc.row(seed, epoch);
        row.test_accuracy = accuracy(model, data.test);
        if (cfg.log_wall_time)
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        run.rows.push_back(row);
    }
    return run;
}

TrainSummary train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
    cfg.validate();
    {
        std::set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
        if (unique.size() != cfg.seeds.size()) throw ConfigError("config: train.seeds contains duplicates");
    }
    const Dataset data = load_dataset(cfg.dataset);
    if (out_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir->string() + ": " + ec.message());
    }

    // Replicas share nothing mutable; each writes its own files, merged afterwards in seed order.
    std::vector<std::vector<MetricsRow>> rows(cfg.seeds.size());
    std::vector<double> final_accuracy(cfg.seeds.size(), 0.0);
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
            try {
                SeedRun run = train_seed(cfg, data, cfg.seeds[i]);
                if (out_dir) {
                    const auto dir = *out_dir / ("seed_" + std::to_string(cfg.seeds[i]));
                    std::error_code ec;
                    std::filesystem::create_directories(dir, ec);
                    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
                    write_metrics(run.rows, dir / "metrics.csv");
                    save_checkpoint(run.model, dir / "model.ckpt");
                }
                final_accuracy[i] = run.rows.back().test_accuracy;
                log_info("seed " + std::to_string(cfg.seeds[i]) + ": final test accuracy " +
                         std::to_string(final_accuracy[i]));
                rows[i] = std::move(run.rows);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(cfg.threads, cfg.seeds.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    TrainSummary summary;
    summary.final_accuracy = std::move(final_accuracy);
    for (auto& r : rows) summary.rows.insert(summary.rows.end(), r.begin(), r.end());
    if (out_dir) write_metrics(summary.rows, *out_dir / "metrics.csv");
    return summary;
}

double evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
    cfg.dataset.validate();
    cfg.model.validate();
    Model model = Model::build(cfg.model, 0);
    load_checkpoint(model, checkpoint);
    const Dataset data = load_dataset(cfg.dataset);
    return accuracy(model, data.test);
}

GradCheckReport run_grad_check(std::size_t trials, std::uint64_t seed) {
    if (trials == 0) throw ConfigError("grad-check: trials must be >= 1");
    static constexpr double kWeights[] = {-4.0, 0.0, 4.0};
    static constexpr SimilarityKind kKinds[] = {SimilarityKind::l2, SimilarityKind::l1, SimilarityKind::cosine};
    constexpr std::size_t kCases = 11;  // 9 tied (kind × weight), mixup, fixmatch
    constexpr std::size_t kBatch = 4;

    GradCheckReport report;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = derive_rng(seed, t);
        ModelSpec spec;
        spec.activation = Activation::tanh;
        spec.classes = 3;
        spec.feature_dim = 3;
        const bool conv = t % 4 == 3;
        if (conv) {
            spec.kind = ModelKind::small_conv;
            spec.input = {1, 4, 4};
            spec.conv_channels = {2, 3};
        } else {
            spec.kind = ModelKind::mlp;
            spec.input = {1, 1, 4};
            spec.hidden = {5};
        }
        Model model = Model::build(spec, rng());
        const std::size_t n = spec.input_numel();
        auto random_input = [&](std::size_t rows) {
            std::vector<double> v(rows * n);
            for (double& x : v) x = uniform01(rng);
            return Tensor::from({rows, n}, std::move(v));
        };
        auto random_labels = [&](std::size_t rows) {
            std::vector<int> y(rows);
            for (int& l : y) l = static_cast<int>(uniform_int(rng, 0, 2));
            return y;
        };

        std::function<Tensor()> objective;
        std::string description;
        const std::size_t which = t % kCases;
        const Tensor x1 = random_input(kBatch), x2 = random_input(kBatch);
        const std::vector<int> y1 = random_labels(kBatch), y2 = random_labels(kBatch);
        if (which < 9) {
            TiedLossConfig tied;
            tied.similarity.kind = kKinds[which / 3];
            tied.tied_weight = kWeights[which % 3];
            tied.branches = bernoulli(rng, 0.5) ? SupervisedBranches::first_only : SupervisedBranches::both;
            objective = [&model, x1, x2, y1, tied] {
                return tied_loss(model.forward(x1), model.forward(x2), y1, tied).total;
            };
            description = "tied_loss similarity=" + to_string(tied.similarity.kind) +
                          " w=" + fmt17(tied.tied_weight) +
                          (tied.branches == SupervisedBranches::both ? " branches=both" : " branches=first_only");
        } else if (which == 9) {
            const double lambda = uniform01(rng);
            const double w = uniform(rng, -4.0, 4.0);
            objective = [&model, x1, x2, y1, y2, lambda, w] {
                return tied_mixup_loss(model, x1, y1, x2, y2, lambda, w).total;
            };
            description = "tied_mixup_loss lambda=" + fmt17(lambda) + " w=" + fmt17(w);
        } else {
            const Tensor weak = random_input(2 * kBatch);
            Tensor strong = random_input(2 * kBatch);
            FixMatchConfig fm;
            fm.tied_weight = uniform(rng, 0.5, 4.0);
            // Place the threshold in the widest gap between weak-view confidences so
            // finite-difference probes never flip the mask.
            std::vector<double> conf;
            {
                NoGradGuard no_grad;
                const Tensor q = softmax(model.forward(weak).logits);
                for (std::size_t i = 0; i < q.dim(0); ++i) {
                    const auto row = q.data().subspan(i * q.dim(1), q.dim(1));
                    conf.push_back(*std::max_element(row.begin(), row.end()));
                }
            }
            std::sort(conf.begin(), conf.end());
            std::size_t gap = 0;
            for (std::size_t i = 1; i + 1 < conf.size(); ++i)
                if (conf[i + 1] - conf[i] > conf[gap + 1] - conf[gap]) gap = i;
            fm.threshold = 0.5 * (conf[gap] + conf[gap + 1]);
            objective = [&model, x1, y1, weak, strong, fm] {
                return tied_fixmatch_loss(model.forward(x1), y1, model.forward(weak), model.forward(strong), fm).total;
            };
            description = "tied_fixmatch_loss tau=" + fmt17(fm.threshold) + " w=" + fmt17(fm.tied_weight);
        }
        description += conv ? " model=small_conv" : " model=mlp";

        std::vector<Tensor> params;
        for (const auto& p : model.parameters()) params.push_back(p.value);
        const double err = grad_check(objective, params);
        report.trials.push_back({description, err});
        report.max_relative_error = std::max(report.max_relative_error, err);
    }
    return report;
}

TaylorCheckReport verify_taylor(const ExperimentConfig& cfg) {
    cfg.model.validate();
    cfg.taylor.validate();
    const Model model = Model::build(cfg.model, cfg.model_seed);
    Rng rng = derive_rng(cfg.taylor.seed, kProbeStream);
    const std::size_t n = cfg.model.input_numel();
    std::vector<double> probes(cfg.taylor.probe_points * n);
    for (double& v : probes) v = uniform01(rng);
    return taylor_check(model, Tensor::from({cfg.taylor.probe_points, n}, std::move(probes)), cfg.taylor);
}

void write_taylor_csv(const TaylorCheckReport& report, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open CSV for writing: " + path.string());
    f << "probe_index,sigma,mc_estimate,std_error,taylor_prediction,relative_gap\n";
    for (const auto& r : report.rows)
        f << r.probe_index << ',' << fmt17(r.sigma) << ',' << fmt17(r.mc_estimate) << ',' << fmt17(r.std_error) << ','
          << fmt17(r.taylor_prediction) << ',' << fmt17(r.relative_gap) << '\n';
    if (!f) throw IoError("failed writing CSV: " + path.string());
}

void make_data(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const Dataset data = load_dataset(cfg.dataset);
    write_binary(data.train, out);
    std::filesystem::path test = out;
    test += ".test";
    write_binary(data.test, test);
    if (cfg.dataset.labels_per_class) {
        std::filesystem::path labels = out;
        labels += ".labels";
        Rng rng = derive_rng(cfg.dataset.seed, kLabelStream);
        write_label_file(subset_labels(data.train, *cfg.dataset.labels_per_class, cfg.dataset.classes, rng).labeled,
                         labels);
    }
    log_info("make-data: wrote " + std::to_string(data.train.size()) + " train and " +
             std::to_string(data.test.size()) + " test records to " + out.string());
}

}  // namespace tiedaug
