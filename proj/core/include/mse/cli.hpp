#pragma once

#include <string>
#include <vector>

namespace mse {

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // without program name

}  // namespace mse
