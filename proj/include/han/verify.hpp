#pragma once

#include <string>
#include <vector>

namespace han {

struct PropertyResult {
    std::string name;
    bool pass{false};
    std::string detail;
};

/// Deterministic property suite behind the `verify` command: reflection
/// identities, analytic-vs-numeric gradient agreement, G-matrix
/// orthogonality certificates, parameter/activation-ratio oracles, stencil
/// exactness, split determinism and schedule structure.
std::vector<PropertyResult> run_property_suite();

bool all_passed(const std::vector<PropertyResult>& results);

} // namespace han
