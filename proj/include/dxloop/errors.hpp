// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dxloop {

/// Invalid input data or configuration (bad record, unknown test name, bad
/// config key). The CLI maps it to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (stepping a finished episode,
/// confidence level out of range).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dxloop
