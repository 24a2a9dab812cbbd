#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include "cav/matrix.hpp"
#include "cav/tape.hpp"

// Central finite differences against tape adjoints. build() must construct
// the same scalar expression every call from the given leaf handles.
struct FdResult {
  double max_rel = 0.0;
  int checked = 0;
  bool ok(double tol = 1e-4) const { return checked > 0 && max_rel <= tol; }
};

template <class BuildFn>
FdResult fd_check(BuildFn build, const std::vector<cav::num::Matrix>& leaves,
                  double h = 1e-5) {
  using cav::num::Matrix;
  using cav::num::Tape;

  Tape tape;
  std::vector<Tape::Handle> hs;
  hs.reserve(leaves.size());
  for (const auto& m : leaves) hs.push_back(tape.leaf(m));
  Tape::Handle out = build(tape, hs);
  tape.backward(out);

  auto eval_at = [&](std::size_t li, std::size_t e, double delta) {
    std::vector<Matrix> pert = leaves;
    pert[li].data[e] += delta;
    Tape t2;
    std::vector<Tape::Handle> hs2;
    hs2.reserve(pert.size());
    for (const auto& m : pert) hs2.push_back(t2.leaf(m));
    return t2.value(build(t2, hs2))(0, 0);
  };

  FdResult r;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (std::size_t e = 0; e < leaves[li].size(); ++e) {
      double fd = (eval_at(li, e, h) - eval_at(li, e, -h)) / (2.0 * h);
      double ad = tape.grad(hs[li]).data[e];
      double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      r.max_rel = std::max(r.max_rel, rel);
      ++r.checked;
    }
  }
  return r;
}
