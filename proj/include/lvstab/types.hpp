#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lvstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model definition / derivation failures.
struct ModelError : Error {
    using Error::Error;
};
struct SingularSystem : ModelError {
    using ModelError::ModelError;
};
struct NonPositiveEquilibrium : ModelError {
    using ModelError::ModelError;
};

// Parameter-sweep input failures.
struct InvalidScale : Error {
    using Error::Error;
};

// Iterative algorithm failed to reach its tolerance within the cap.
struct NoConvergence : Error {
    using Error::Error;
};

// Configuration file failures.
struct ParseError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};

// Simulation left the domain where the evaluated functional is defined.
struct DomainError : Error {
    using Error::Error;
};

// Pairs (i,j) of an n x n interaction matrix are flattened row-major into a
// single channel index k; the augmented state stacks one channel block of
// length n^2 per delayed quantity.
inline int pair_index(int i, int j, int n) { return i * n + j; }

// Dimension of the augmented vector (x, x~d, x~D, zD): n + 3n^2.
inline int augmented_dim(int n) { return n + 3 * n * n; }

}  // namespace lvstab
