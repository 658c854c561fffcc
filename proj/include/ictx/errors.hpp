#pragma once

#include <stdexcept>
#include <string>

namespace ictx {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument or configuration value detected before any work starts.
struct param_error : error {
    using error::error;
};

// A simulation left its valid domain (blow-up, escape after clipping).
struct simulation_error : error {
    using error::error;
};

// Iterative numerics failed to converge or produced a degenerate result.
struct numerical_error : error {
    using error::error;
};

// Remote backend could not be reached; safe to retry.
struct transport_error : error {
    using error::error;
};

// Remote backend replied with something outside the wire contract.
struct protocol_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace ictx
