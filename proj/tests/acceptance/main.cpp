#include <iostream>

#include "criteria.hpp"

int main() {
  const auto results = rulsurv::acceptance::run_all();
  return rulsurv::acceptance::report(std::cout, results) == 0 ? 0 : 1;
}
