#pragma once

#include <stdexcept>
#include <string>

namespace selfpace {

/// Invalid or inconsistent input data (manifests, annotations, metrics input).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Detector training or external-detector invocation failure.
class TrainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace selfpace
