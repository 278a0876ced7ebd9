#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace spinnet {

using Vec = Eigen::VectorXd;
using VecI = Eigen::VectorXi;
using Mat = Eigen::MatrixXd;

// Error taxonomy. Each class maps onto one CLI exit code:
// config (2), numeric (3), resource (4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ResourceError : Error {
    using Error::Error;
};

struct EmptyRouteError : ConfigError {
    using ConfigError::ConfigError;
};
struct DuplicateQueueInRouteError : ConfigError {
    using ConfigError::ConfigError;
};
struct UnknownQueueIndexError : ConfigError {
    using ConfigError::ConfigError;
};
struct NoRoutesError : ConfigError {
    using ConfigError::ConfigError;
};

struct StateSpaceTooLargeError : ResourceError {
    using ResourceError::ResourceError;
};
struct TableTooLargeError : ResourceError {
    using ResourceError::ResourceError;
};

struct UnstableNetworkError : NumericError {
    using NumericError::NumericError;
};
struct StateNotInSnError : NumericError {
    using NumericError::NumericError;
};
struct TableMissError : NumericError {
    using NumericError::NumericError;
};
struct DidNotConvergeError : NumericError {
    using NumericError::NumericError;
};
struct NumericallySingularError : NumericError {
    using NumericError::NumericError;
};

}  // namespace spinnet
