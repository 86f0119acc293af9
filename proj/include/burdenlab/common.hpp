#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <stdexcept>
#include <string>

namespace burdenlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: config files, CLI arguments, malformed model documents.
struct ConfigError : Error {
    using Error::Error;
};

// Shape or index inconsistency between values fed to an operation.
struct DimensionError : Error {
    using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
struct NumericsError : Error {
    using Error::Error;
};

// Shortest round-trip decimal representation. Used wherever numbers land in
// files that must be byte-stable across reruns.
inline std::string to_short_string(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) {
        throw Error("to_short_string: conversion failed");
    }
    return std::string(buf, ptr);
}

}  // namespace burdenlab
