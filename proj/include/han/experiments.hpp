#pragma once

#include <string>

namespace han {

/// Run one experiment described by a JSON config (schema in
/// docs/formats.md). Validates the whole config before any compute,
/// rejects unknown keys, writes the results bundle into config.out_dir
/// (unless dry_run) and returns the summary document as JSON text.
/// Throws han::Error on invalid configs or failed runs.
std::string run_experiment(const std::string& config_json);

/// Library version string.
const char* version();

} // namespace han
