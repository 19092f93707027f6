#pragma once

namespace lnca {

/// Version of the config schema; stamped into every emitted artifact.
inline constexpr int kSchemaVersion = 1;

}  // namespace lnca
