#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "nlslide/psvf.hpp"

namespace nlslide::testing {

inline std::vector<Expression> exprs(std::initializer_list<const char*> texts) {
  std::vector<Expression> out;
  for (const char* t : texts) out.push_back(parse(t));
  return out;
}

inline PiecewiseSystem planar(std::initializer_list<const char*> xp, std::initializer_list<const char*> xm) {
  return {{"x", "y"}, parse("y"), exprs(xp), exprs(xm)};
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

}  // namespace nlslide::testing
