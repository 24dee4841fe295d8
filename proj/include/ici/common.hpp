#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ici {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = std::vector<int>;

/// Base class for all artifact errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad parameters, bad configuration, bad CLI usage.
struct ConfigError : Error {
    using Error::Error;
};

/// Unreadable / malformed / inconsistent input data.
struct DataError : Error {
    using Error::Error;
};

}  // namespace ici
