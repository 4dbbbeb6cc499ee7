#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mambaest {

struct SelftestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Fast invariant checks over every module (a few seconds in total). Each
/// result line is also written to `log` when given.
std::vector<SelftestResult> run_selftests(std::ostream* log = nullptr);

}  // namespace mambaest
