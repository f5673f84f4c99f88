// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dxloop {

/// Runs one command line. Returns 0 on success, 1 on usage or validation
/// errors, 2 on runtime failures.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dxloop
