#pragma once

// Checkpoint container: 8-byte magic "LNCACKPT", u32 format version, u64
// header length, a JSON header, then raw little-endian tensor buffers. The
// header lists every tensor (name, shape, dtype, offset, nbytes) under its
// section ("autoencoder" or "transition") in module order.

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "lnca/model.hpp"

namespace lnca::inline LNCA_PRECISION {

inline constexpr std::uint32_t kCheckpointFormat = 1;

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Writes model weights, batch-norm statistics and `extra` (stored under
/// "run" in the header; usually the run config).
void save_checkpoint(const std::filesystem::path& path, const RestorationModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Header of a checkpoint file. Throws CheckpointError if unreadable.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Rebuilds the model recorded in the header and loads every section.
std::unique_ptr<RestorationModel> load_checkpoint(const std::filesystem::path& path);

/// Loads the autoencoder section into `model`; its AE config must match.
void load_autoencoder(const std::filesystem::path& path, RestorationModel& model);

}  // namespace lnca
