#pragma once

#include <stdexcept>
#include <string>

namespace eedit {

// File or plan contents violate the on-disk format.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A stateful component was used before it was ready (e.g. cache read before first refresh).
struct state_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration failed validation; message carries the offending path.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace eedit
