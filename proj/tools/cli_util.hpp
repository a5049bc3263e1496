#pragma once

#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "toba/common.hpp"

namespace toba::cli {

// Exit codes: 0 ok, 1 library error; usage errors keep CLI11's codes.
template <typename F>
int guarded(const char* tool, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    std::cerr << tool << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << tool << ": unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace toba::cli
