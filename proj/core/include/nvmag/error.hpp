#pragma once

#include <stdexcept>
#include <string>

namespace nvmag {

// All library failures surface as nvmag::Error. The message is a single line
// so the CLI can print it verbatim.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nvmag
