#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnca/model.hpp"
#include "lnca/training.hpp"

namespace lnca::inline LNCA_PRECISION {

/// Raised for documents that fail schema validation or semantic checks.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    std::string train_dir;
    std::string val_dir;
    double eval_severity = 0.1;
    std::uint64_t eval_seed = 1234;
};

struct BenchConfig {
    std::vector<int> resolutions{32, 64, 128};
    std::vector<int> batches{8, 16, 32};
    int train_steps = 16;
    int inference_steps = 64;
    int repeats = 10;
    /// 0 disables the budget.
    std::int64_t byte_budget = std::int64_t{2} << 30;
    std::vector<ModelKind> models{ModelKind::kLatentViTCA, ModelKind::kLatentNAFCA, ModelKind::kInputViTCA};
};

struct RunConfig {
    ModelConfig model;
    DataConfig data;
    TrainConfig train_ae;
    TrainConfig train_nca;
    LossWeights weights;
    BenchConfig bench;
};

/// The published schema (schemas/config.schema.json), embedded at build time.
const nlohmann::json& config_schema();

/// Validates `doc` against `schema` (a JSON Schema subset: type, enum,
/// required, properties, additionalProperties, minimum/maximum and their
/// exclusive forms, items, local $ref). Returns one message per violation.
std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema);

/// Schema-validates then converts; missing fields keep their defaults.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json model_to_json(const ModelConfig& config);
ModelConfig model_from_json(const nlohmann::json& doc);

}  // namespace lnca
