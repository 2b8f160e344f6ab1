#pragma once

#include <iosfwd>

namespace nlslide {

/// Entry point of the `nlslide` tool. Exit codes: 0 ok, 1 analysis failure,
/// 2 usage or configuration error. Errors go to `err` as "category: message".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlslide
