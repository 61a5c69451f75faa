#pragma once

#include <stdexcept>
#include <string>

namespace qtaccel {

// Error categories map one-to-one onto CLI exit codes (usage 2, data 3, model 4).
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace qtaccel
