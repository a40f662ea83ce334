#ifndef QPOT3D_ERRORS_HPP_
#define QPOT3D_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace qpot3d {

/// The linearization at an equilibrium has an eigenvalue with nonnegative
/// real part.
class StabilityError : public std::runtime_error {
 public:
  explicit StabilityError(std::string const& what) : std::runtime_error(what) {}
};

/// The equilibrium does not coincide with a mesh node.
class AlignmentError : public std::invalid_argument {
 public:
  explicit AlignmentError(std::string const& what)
      : std::invalid_argument(what) {}
};

/// A point lies outside the region where the solved field is available.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(std::string const& what) : std::domain_error(what) {}
};

/// Invalid run configuration (bad keys, values or combinations).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::string const& what)
      : std::invalid_argument(what) {}
};

}  // namespace qpot3d

#endif  // QPOT3D_ERRORS_HPP_
