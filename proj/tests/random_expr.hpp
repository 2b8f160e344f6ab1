#pragma once

// Test-only generator of random polynomial/trig formulas in the expr grammar.

#include <random>
#include <string>
#include <vector>

namespace nlslide::testing {

class RandomFormula {
 public:
  RandomFormula(std::vector<std::string> vars, std::uint64_t seed) : vars_(std::move(vars)), rng_(seed) {}

  std::string next(int depth = 3) { return node(depth); }

 private:
  std::string leaf() {
    std::uniform_int_distribution<int> pick(0, 3);
    if (pick(rng_) == 0) {
      std::uniform_int_distribution<int> c(-9, 9);
      return std::to_string(c(rng_)) == "0" ? "0.5" : "(" + std::to_string(c(rng_)) + "/4)";
    }
    std::uniform_int_distribution<std::size_t> v(0, vars_.size() - 1);
    return vars_[v(rng_)];
  }

  std::string node(int depth) {
    if (depth == 0) return leaf();
    std::uniform_int_distribution<int> pick(0, 9);
    switch (pick(rng_)) {
      case 0: return "(" + node(depth - 1) + " + " + node(depth - 1) + ")";
      case 1: return "(" + node(depth - 1) + " - " + node(depth - 1) + ")";
      case 2: return node(depth - 1) + "*" + node(depth - 1);
      case 3: return "(" + node(depth - 1) + ")^2";
      case 4: return "sin(" + node(depth - 1) + ")";
      case 5: return "cos(" + node(depth - 1) + ")";
      case 6: return "tanh(" + node(depth - 1) + ")";
      case 7: return node(depth - 1) + "/(2 + (" + node(depth - 1) + ")^2)";
      case 8: return "-" + node(depth - 1);
      default: return "exp(0.3*sin(" + node(depth - 1) + "))";
    }
  }

  std::vector<std::string> vars_;
  std::mt19937_64 rng_;
};

}  // namespace nlslide::testing
