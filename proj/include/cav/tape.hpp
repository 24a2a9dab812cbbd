#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "cav/matrix.hpp"

namespace cav::num {

class shape_error : public std::invalid_argument {
 public:
  explicit shape_error(const std::string& msg) : std::invalid_argument(msg) {}
};

enum class OpKind {
  leaf,
  matmul,
  add,
  add_row,  // broadcast a 1xN row over every row
  relu,
  tanh_op,
  exp_op,
  log_op,
  softmax,  // over rows
  sum,
  mean,
  scale,
  slice_rows,
  concat_rows,
  transpose,
};

// Reverse-mode tape over whole matrices. Nodes are append-only and refer to
// parents by index, so evaluation order is the insertion order.
class Tape {
 public:
  using Handle = int;

  Handle leaf(Matrix m);
  Handle matmul(Handle a, Handle b);
  Handle add(Handle a, Handle b);
  Handle add_row(Handle a, Handle row);
  Handle relu(Handle a);
  Handle tanh(Handle a);
  Handle exp(Handle a);
  Handle log(Handle a);
  Handle softmax(Handle a);
  Handle sum(Handle a);
  Handle mean(Handle a);
  Handle scale(Handle a, double s);
  Handle slice_rows(Handle a, int r0, int r1);
  Handle concat_rows(const std::vector<Handle>& parts);
  Handle transpose(Handle a);

  const Matrix& value(Handle h) const { return nodes_[check(h)].value; }
  const Matrix& grad(Handle h) const { return nodes_[check(h)].adjoint; }

  // Seeds d(output)/d(output) = 1 and accumulates adjoints for every
  // contributing node. output must be 1x1. Adjoints are reset first, so
  // repeated calls are independent.
  void backward(Handle output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    std::vector<int> parts;  // concat_rows only
    int r0 = 0, r1 = 0;      // slice_rows only
    double s = 0.0;          // scale only
    Matrix value;
    Matrix adjoint;
    bool touched = false;
  };

  Handle push(Node n);
  int check(Handle h) const;
  std::vector<Node> nodes_;
};

}  // namespace cav::num
