#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lnca/checkpoint.hpp"
#include "lnca/config.hpp"
#include "lnca/dataset.hpp"
#include "lnca/version.hpp"

using namespace lnca;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lnca_io_test";
    fs::create_directories(dir);
    return dir / name;
}

bool has_error_at(const std::vector<std::string>& errs, const std::string& where) {
    for (const auto& e : errs)
        if (e.find(where) != std::string::npos) return true;
    return false;
}

ModelConfig small_model(ModelKind kind) {
    ModelConfig m;
    m.kind = kind;
    m.ae.height = m.ae.width = 16;
    m.ae.base_filters = 8;
    m.transition.hidden_channels = 8;
    m.transition.embed_dim = 16;
    m.transition.mlp_hidden = 32;
    m.transition.zero_init_head = false;
    return m;
}

}  // namespace

TEST_CASE("minimal document gives the defaults") {
    const RunConfig c = parse_config(json{{"schema_version", 1}});
    CHECK(c.model.kind == ModelKind::kLatentNAFCA);
    CHECK(c.train_ae.epochs == 20);
    CHECK(c.weights.margin_alpha == 0.2);
    CHECK(c.weights.eq_noise_var == 1e-3);
    CHECK(c.bench.resolutions == std::vector<int>{32, 64, 128});
    CHECK(c.bench.batches == std::vector<int>{8, 16, 32});
}

TEST_CASE("schema violations are reported with their location") {
    const json& schema = config_schema();
    CHECK(schema_errors(json{{"schema_version", 1}}, schema).empty());
    CHECK(has_error_at(schema_errors(json::object(), schema), "schema_version"));
    CHECK(has_error_at(schema_errors(json{{"schema_version", 2}}, schema), "/schema_version"));
    CHECK(has_error_at(schema_errors(json{{"schema_version", 1}, {"bogus", 1}}, schema), "bogus"));
    CHECK(has_error_at(schema_errors(json{{"schema_version", 1}, {"model", "unet"}}, schema), "/model"));
    CHECK(has_error_at(
        schema_errors(json{{"schema_version", 1}, {"train_ae", {{"epochs", 0}}}}, schema), "/train_ae/epochs"));
    CHECK(has_error_at(
        schema_errors(json{{"schema_version", 1}, {"train_nca", {{"lr", "fast"}}}}, schema), "/train_nca/lr"));
    CHECK(has_error_at(
        schema_errors(json{{"schema_version", 1}, {"loss_weights", {{"margin_alpha", 0}}}}, schema),
        "/loss_weights/margin_alpha"));
    CHECK(has_error_at(schema_errors(json{{"schema_version", 1}, {"bench", {{"batches", {8, 0}}}}}, schema),
                       "/bench/batches/1"));

    CHECK_THROWS_AS(parse_config(json{{"schema_version", 1}, {"bogus", 1}}), ConfigError);
    // Passes the schema but fails semantic validation.
    CHECK_THROWS_AS(
        parse_config(json{{"schema_version", 1}, {"model", "latent-vitca"}, {"transition", {{"embed_dim", 10}, {"heads", 4}}}}),
        ConfigError);
    CHECK_THROWS_AS(load_config(scratch("missing.json")), ConfigError);
    std::ofstream(scratch("broken.json")) << "{ not json";
    CHECK_THROWS_AS(load_config(scratch("broken.json")), ConfigError);
}

TEST_CASE("embedded schema equals the published file") {
    std::ifstream in(fs::path(LNCA_SOURCE_DIR) / "schemas" / "config.schema.json");
    REQUIRE(in);
    CHECK(json::parse(in) == config_schema());
}

TEST_CASE("bundled toy config validates and round-trips") {
    const RunConfig c = load_config(fs::path(LNCA_SOURCE_DIR) / "configs" / "toy.json");
    CHECK(c.train_ae.epochs == 200);
    CHECK(c.train_nca.epochs == 200);
    CHECK(c.train_nca.pool_size == 64);
    CHECK(c.model.kind == ModelKind::kLatentNAFCA);
    const json doc = to_json(c);
    CHECK(schema_errors(doc, config_schema()).empty());
    CHECK(to_json(parse_config(doc)) == doc);
    CHECK(doc["schema_version"] == kSchemaVersion);
}

TEST_CASE("checkpoint round trip restores every tensor and statistic") {
    for (ModelKind kind : {ModelKind::kLatentNAFCA, ModelKind::kLatentViTCA, ModelKind::kInputViTCA}) {
        RestorationModel model(small_model(kind));
        if (Autoencoder* ae = model.autoencoder()) {
            NoGradGuard g;
            ae->set_mode(Mode::kTrain);
            ae->forward_bypass(Var(synthesize_toy_images(2, 16, 16, 1).images));
        }
        const fs::path path = scratch("model.ckpt");
        save_checkpoint(path, model, {{"note", "test"}});
        const json header = read_checkpoint_header(path);
        CHECK(header["schema_version"] == kSchemaVersion);
        CHECK(header["format_version"] == kCheckpointFormat);
        CHECK(header["run"]["note"] == "test");
        CHECK(header["sections"].contains("autoencoder") == model.latent());

        const auto loaded = load_checkpoint(path);
        CHECK(loaded->kind() == kind);
        CHECK(loaded->transition().checksum() == model.transition().checksum());
        if (model.latent()) CHECK(loaded->autoencoder()->checksum() == model.autoencoder()->checksum());

        // Identical restorations after reload.
        const Var x(synthesize_toy_images(2, 16, 16, 5).images);
        if (Autoencoder* ae = model.autoencoder()) ae->set_mode(Mode::kEval);
        if (Autoencoder* ae = loaded->autoencoder()) ae->set_mode(Mode::kEval);
        const Tensor a = model.restore(x, 3, 9).value(), b = loaded->restore(x, 3, 9).value();
        CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    }
}

TEST_CASE("autoencoder-only loading and checkpoint errors") {
    RestorationModel source(small_model(ModelKind::kLatentNAFCA));
    const fs::path path = scratch("ae.ckpt");
    save_checkpoint(path, source);

    RestorationModel target(small_model(ModelKind::kLatentViTCA));
    const std::uint64_t transition_before = target.transition().checksum();
    load_autoencoder(path, target);
    CHECK(target.autoencoder()->checksum() == source.autoencoder()->checksum());
    CHECK(target.transition().checksum() == transition_before);

    ModelConfig other = small_model(ModelKind::kLatentNAFCA);
    other.ae.base_filters = 4;
    RestorationModel mismatch(other);
    CHECK_THROWS_AS(load_autoencoder(path, mismatch), CheckpointError);

    CHECK_THROWS_AS(load_checkpoint(scratch("nope.ckpt")), CheckpointError);
    std::ofstream(scratch("junk.ckpt")) << "definitely not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(scratch("junk.ckpt")), CheckpointError);

    // Truncated data section.
    const auto size = fs::file_size(path);
    fs::copy_file(path, scratch("short.ckpt"), fs::copy_options::overwrite_existing);
    fs::resize_file(scratch("short.ckpt"), size - 64);
    CHECK_THROWS_AS(load_checkpoint(scratch("short.ckpt")), CheckpointError);
}
