#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace san {

// Shape or dimensionality mismatch between operands.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Value outside the mathematical domain of an operation (log of a
// non-positive number, non-positive input to power-max, ...).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A documented API contract was violated (non-scalar loss, variable
// cardinality fed to an order-sensitive aggregator, ...).
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad magic, truncated payload, count mismatch).
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimization failure (loss became non-finite).
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

}  // namespace san
