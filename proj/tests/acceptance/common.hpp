#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "pdet/io/dataset.hpp"

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <class... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// Progress notes go to stderr so stdout keeps one line per criterion.
template <class... Args>
void note(const char* fmt, Args... args) {
  std::fprintf(stderr, "    %s\n", format(fmt, args...).c_str());
}

// Concatenates datasets on the same grid into one manifest.
pdet::Dataset merge(std::vector<pdet::Dataset> parts);

Outcome gradient_suite();
Outcome solver_oracles();
Outcome overfit_check();
Outcome generalization();
Outcome finetuning();
Outcome fno_plateau();
Outcome formats_and_determinism();

}  // namespace acceptance
