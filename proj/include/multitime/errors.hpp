#pragma once

#include <stdexcept>
#include <string>

namespace multitime {

// Thrown when an argument violates a documented precondition.
struct invalid_input_error : std::runtime_error {
    explicit invalid_input_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when array/matrix shapes disagree.
struct shape_error : invalid_input_error {
    explicit shape_error(const std::string& what) : invalid_input_error(what) {}
};

// Thrown when inputs are well-formed but mutually inconsistent
// (e.g. a decomposition's hypothesis fails on the supplied data).
struct inconsistent_input_error : std::runtime_error {
    explicit inconsistent_input_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a time stepper loses its conservation law or hits a
// stability guard.
struct integrator_failure_error : std::runtime_error {
    explicit integrator_failure_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on file read/write problems.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace multitime
