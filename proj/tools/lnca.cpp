// Command-line driver: dataset synthesis, both training phases, restoration,
// evaluation and the efficiency benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lnca/bench.hpp"
#include "lnca/checkpoint.hpp"
#include "lnca/config.hpp"
#include "lnca/dataset.hpp"
#include "lnca/rng.hpp"
#include "lnca/training.hpp"
#include "lnca/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lnca;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kConfig = 2, kCheckpoint = 3, kBudget = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::optional<int> epochs;
    std::optional<int> batch;
    std::optional<int> steps;
    std::optional<std::string> model;
    std::optional<std::int64_t> byte_budget;
    std::string checkpoint;
    std::string input;
    std::string corrupted;
    std::string data;
    std::string val;
    int count = 16;
    int size = 32;
};

[[noreturn]] void fail_usage(const std::string& msg) { throw ConfigError(msg); }

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

void log(const std::string& line) { std::cout << line << std::endl; }

// Config plus the directory its relative paths are resolved against.
struct Loaded {
    RunConfig run;
    fs::path base = fs::current_path();
};

Loaded load(const Options& o) {
    Loaded l;
    if (!o.config.empty()) {
        l.run = load_config(o.config);
        l.base = fs::absolute(o.config).parent_path();
    }
    RunConfig& r = l.run;
    if (o.model) {
        try {
            r.model.kind = parse_model_kind(*o.model);
        } catch (const std::invalid_argument& e) {
            fail_usage(e.what());
        }
    }
    for (TrainConfig* t : {&r.train_ae, &r.train_nca}) {
        if (o.seed) t->seed = *o.seed;
        if (o.epochs) t->epochs = *o.epochs;
        if (o.batch) t->batch_size = *o.batch;
    }
    if (o.steps) r.train_nca.eval_steps = *o.steps;
    if (o.byte_budget) r.bench.byte_budget = *o.byte_budget;
    try {
        r.model.ae.validate();
        r.train_ae.validate();
        r.train_nca.validate();
        r.weights.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return l;
}

fs::path resolve(const Loaded& l, const std::string& flag, const std::string& from_config, const char* what) {
    const std::string p = !flag.empty() ? flag : from_config;
    if (p.empty()) fail_usage(std::string("no ") + what + " directory (set it in the config or pass the flag)");
    const fs::path path = !flag.empty() ? fs::path(p) : l.base / p;
    // make-dataset output folders hold the clean images under clean/.
    return fs::is_directory(path / "clean") ? path / "clean" : path;
}

ImageBatch load_val(const Loaded& l, const Options& o) {
    if (o.val.empty() && l.run.data.val_dir.empty()) return ImageBatch();
    return load_image_folder(resolve(l, o.val, l.run.data.val_dir, "validation")).images;
}

json run_info(const Loaded& l, const char* command) {
    json j = to_json(l.run);
    j["command"] = command;
    return j;
}

fs::path out_dir(const Options& o) {
    fs::create_directories(o.out);
    return o.out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path.string());
    out << j.dump(2) << "\n";
}

int make_dataset_cmd(const Options& o) {
    const Loaded l = load(o);
    const TrainConfig& t = l.run.train_ae;
    Dataset data;
    if (!o.data.empty()) {
        data = load_image_folder(o.data);
    } else {
        data = synthesize_toy_images(o.count, o.size, o.size, t.seed);
    }
    CorruptionSpec spec = t.corruption;
    spec.seed = derive_seed(t.seed, {0xda7a});
    const auto entries = make_dataset(data, spec, out_dir(o));
    log("wrote " + std::to_string(entries.size()) + " clean/corrupted pairs to " + o.out);
    return kOk;
}

int train_ae_cmd(const Options& o) {
    const Loaded l = load(o);
    const Dataset train = load_image_folder(resolve(l, o.data, l.run.data.train_dir, "training"));
    ModelConfig mc = l.run.model;
    mc.ae.height = train.images.dim(1);
    mc.ae.width = train.images.dim(2);
    if (mc.kind == ModelKind::kInputViTCA) mc.kind = ModelKind::kLatentNAFCA;  // the AE does not depend on it
    RestorationModel model(mc);
    const TrainResult r =
        train_ae(*model.autoencoder(), train.images, load_val(l, o), l.run.train_ae, l.run.weights, log);
    const fs::path dir = out_dir(o);
    save_checkpoint(dir / "ae.ckpt", model, run_info(l, "train-ae"));
    write_loss_csv(dir / "ae_loss.csv", r.curve);
    log("saved " + (dir / "ae.ckpt").string() + " after " + std::to_string(r.optimizer_steps) + " optimizer steps (" +
        std::to_string(r.seconds) + " s)");
    return kOk;
}

int train_nca_cmd(const Options& o) {
    const Loaded l = load(o);
    const Dataset train = load_image_folder(resolve(l, o.data, l.run.data.train_dir, "training"));
    ModelConfig mc = l.run.model;
    mc.ae.height = train.images.dim(1);
    mc.ae.width = train.images.dim(2);
    RestorationModel model(mc);
    const fs::path dir = out_dir(o);
    if (model.latent()) {
        const fs::path ckpt = o.checkpoint.empty() ? dir / "ae.ckpt" : fs::path(o.checkpoint);
        if (!fs::exists(ckpt)) throw CheckpointError("autoencoder checkpoint not found: " + ckpt.string());
        load_autoencoder(ckpt, model);
    }
    ReplayPool pool(l.run.train_nca.pool_size, derive_seed(l.run.train_nca.seed, {0x9001}));
    const TrainResult r =
        train_nca(model, train.images, load_val(l, o), l.run.train_nca, l.run.weights, pool, log);
    save_checkpoint(dir / "model.ckpt", model, run_info(l, "train-nca"));
    write_loss_csv(dir / "nca_loss.csv", r.curve);
    log("saved " + (dir / "model.ckpt").string() + " after " + std::to_string(r.optimizer_steps) +
        " optimizer steps (" + std::to_string(r.seconds) + " s)");
    return kOk;
}

std::unique_ptr<RestorationModel> open_model(const Options& o) {
    if (o.checkpoint.empty()) fail_usage("--checkpoint is required");
    if (!fs::exists(o.checkpoint)) throw CheckpointError("checkpoint not found: " + o.checkpoint);
    return load_checkpoint(o.checkpoint);
}

int restore_steps(const Options& o, const json& header) {
    if (o.steps) return *o.steps;
    const json run = header.value("run", json::object());
    return run.contains("train_nca") ? run["train_nca"].value("eval_steps", 64) : 64;
}

int restore_cmd(const Options& o) {
    if (o.input.empty()) fail_usage("--input is required");
    auto model = open_model(o);
    const json header = read_checkpoint_header(o.checkpoint);
    const int steps = restore_steps(o, header);
    const Dataset in = load_image_folder(o.input);
    const std::uint64_t seed = o.seed.value_or(0);
    Dataset out{restore_images(*model, in.images, steps, seed), in.names};
    const fs::path dir = out_dir(o);
    save_image_folder(dir, out);
    write_json(dir / "restore.json", {{"schema_version", kSchemaVersion},
                                      {"checkpoint", o.checkpoint},
                                      {"steps", steps},
                                      {"seed", seed},
                                      {"images", in.names}});
    log("restored " + std::to_string(out.size()) + " images into " + o.out);
    return kOk;
}

int eval_cmd(const Options& o) {
    if (o.input.empty()) fail_usage("--input (clean images) is required");
    const Loaded l = load(o);
    auto model = open_model(o);
    const json header = read_checkpoint_header(o.checkpoint);
    const int steps = restore_steps(o, header);
    const Dataset clean = load_image_folder(resolve(l, o.input, "", "input"));
    const std::uint64_t seed = o.seed.value_or(l.run.data.eval_seed);
    ImageBatch corrupted;
    if (!o.corrupted.empty()) {
        corrupted = load_image_folder(o.corrupted).images;
    } else {
        CorruptionSpec spec = l.run.train_nca.corruption;
        spec.severity = l.run.data.eval_severity;
        spec.seed = seed;
        corrupted = corrupt_per_image(clean.images, spec);
    }
    if (corrupted.shape() != clean.images.shape())
        throw std::invalid_argument("corrupted and clean folders differ in size or count");
    const ImageBatch restored = restore_images(*model, corrupted, steps, seed);
    const SSIMResult s = ssim(restored, clean.images);
    const SSIMResult s0 = ssim(corrupted, clean.images);
    const auto err = psnr_mse(restored, clean.images);
    const fs::path dir = out_dir(o);
    std::ofstream csv(dir / "eval_report.csv");
    if (!csv) throw std::runtime_error("cannot create " + (dir / "eval_report.csv").string());
    csv << "# schema_version: " << kSchemaVersion << "\n";
    csv << "image_id,ssim,psnr,mse\n";
    csv.precision(9);
    for (std::int64_t i = 0; i < clean.size(); ++i)
        csv << clean.names[i] << ',' << s.per_image[i] << ',' << err[i].psnr << ',' << err[i].mse << '\n';
    log("mean ssim restored=" + std::to_string(s.mean) + " corrupted=" + std::to_string(s0.mean) + " over " +
        std::to_string(clean.size()) + " images (" + std::to_string(steps) + " steps)");
    return kOk;
}

int bench_cmd(const Options& o) {
    const Loaded l = load(o);
    BenchConfig b = l.run.bench;
    std::vector<ModelKind> models = b.models;
    if (o.model) models = {l.run.model.kind};
    std::vector<int> batches = b.batches;
    if (o.batch) batches = {*o.batch};
    const int inference_steps = o.steps.value_or(b.inference_steps);
    BenchOptions opts;
    opts.repeats = b.repeats;
    opts.byte_budget = b.byte_budget;
    opts.seed = o.seed.value_or(0);
    opts.base = l.run.model;
    const fs::path dir = out_dir(o);
    fs::create_directories(dir / "diff");
    std::vector<BenchRecord> train_rows, infer_rows;
    for (ModelKind m : models)
        for (int res : b.resolutions)
            for (int batch : batches) {
                const std::string tag = std::string(to_string(m)) + "_" + std::to_string(res) + "_b" + std::to_string(batch);
                const BenchRecord tr = bench_training_step(m, res, batch, b.train_steps, opts);
                train_rows.push_back(tr);
                InferenceRun ir = bench_inference(m, res, batch, inference_steps, opts);
                infer_rows.push_back(ir.record);
                if (!ir.record.over_budget) write_pgm(dir / "diff" / (tag + ".pgm"), difference_map(ir.output, ir.input));
                log(tag + (tr.over_budget ? " train=--" : " train_peak=" + std::to_string(tr.peak_state_bytes) +
                                                              " train_s=" + std::to_string(tr.mean_latency_s)) +
                    (ir.record.over_budget ? " infer=--" : " infer_s=" + std::to_string(ir.record.mean_latency_s)));
            }
    write_bench_csv(dir / "bench_training.csv", train_rows);
    write_bench_csv(dir / "bench_inference.csv", infer_rows);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent neural cellular automata for image restoration"};
    app.require_subcommand(1, 1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "run configuration (JSON, validated against the schema)")
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "seed for corruption, training and NCA rollouts");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--byte-budget", o.byte_budget, "cap on tracked tensor bytes (0 disables)")
            ->check(CLI::NonNegativeNumber);
    };
    auto training = [&](CLI::App* sub) {
        sub->add_option("--epochs", o.epochs, "override the epoch count")->check(CLI::PositiveNumber);
        sub->add_option("--batch", o.batch, "override the batch size")->check(CLI::Range(2, 1 << 20));
        sub->add_option("--data", o.data, "training image folder (overrides data.train_dir)");
        sub->add_option("--val", o.val, "validation image folder (overrides data.val_dir)");
    };
    auto model_flag = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "latent-vitca, latent-nafca or vitca-input-space")
            ->check(CLI::IsMember({"latent-vitca", "latent-nafca", "vitca-input-space"}));
    };
    auto steps_flag = [&](CLI::App* sub, const char* help) {
        sub->add_option("--steps", o.steps, help)->check(CLI::PositiveNumber);
    };

    CLI::App* make = app.add_subcommand("make-dataset", "write clean/corrupted pairs and a manifest");
    common(make);
    make->add_option("--data", o.data, "source image folder (default: synthetic toy scenes)");
    make->add_option("--count", o.count, "number of synthetic images")->check(CLI::PositiveNumber)->capture_default_str();
    make->add_option("--size", o.size, "synthetic image side length")->check(CLI::Range(4, 4096))->capture_default_str();

    CLI::App* tae = app.add_subcommand("train-ae", "phase 1: train the autoencoder");
    common(tae);
    training(tae);
    model_flag(tae);

    CLI::App* tnca = app.add_subcommand("train-nca", "phase 2: train the NCA with the autoencoder frozen");
    common(tnca);
    training(tnca);
    model_flag(tnca);
    steps_flag(tnca, "NCA steps used for validation");
    tnca->add_option("--checkpoint", o.checkpoint, "autoencoder checkpoint (default: OUT/ae.ckpt)");

    CLI::App* rest = app.add_subcommand("restore", "restore a folder of corrupted images");
    common(rest);
    steps_flag(rest, "NCA steps (default: eval_steps stored in the checkpoint)");
    rest->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    rest->add_option("--input", o.input, "folder of corrupted images")->required();

    CLI::App* ev = app.add_subcommand("eval", "corrupt, restore and score a folder of clean images");
    common(ev);
    steps_flag(ev, "NCA steps (default: eval_steps stored in the checkpoint)");
    ev->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    ev->add_option("--input", o.input, "folder of clean images")->required();
    ev->add_option("--corrupted", o.corrupted, "pre-corrupted counterparts (default: corrupt with data.eval_*)");

    CLI::App* bench = app.add_subcommand("bench", "peak state bytes and latency over the resolution x batch grid");
    common(bench);
    model_flag(bench);
    steps_flag(bench, "inference NCA steps (overrides bench.inference_steps)");
    bench->add_option("--batch", o.batch, "benchmark a single batch size")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << std::endl;
        return kConfig;
    }

    try {
        std::optional<ScopedByteBudget> budget;
        if (o.byte_budget && !bench->parsed() && *o.byte_budget > 0) budget.emplace(*o.byte_budget);
        if (make->parsed()) return make_dataset_cmd(o);
        if (tae->parsed()) return train_ae_cmd(o);
        if (tnca->parsed()) return train_nca_cmd(o);
        if (rest->parsed()) return restore_cmd(o);
        if (ev->parsed()) return eval_cmd(o);
        return bench_cmd(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << one_line(e.what()) << std::endl;
        return kConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "error: checkpoint: " << one_line(e.what()) << std::endl;
        return kCheckpoint;
    } catch (const ByteBudgetExceeded& e) {
        std::cerr << "error: byte-budget: " << one_line(e.what()) << std::endl;
        return kBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << one_line(e.what()) << std::endl;
        return kRuntime;
    }
}
