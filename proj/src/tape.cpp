#include "cav/tape.hpp"

#include <cmath>

#include "cav/kernels.hpp"

namespace cav::num {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

[[noreturn]] void bad_shapes(const char* op, const Matrix& a, const Matrix& b) {
  throw shape_error(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                    shape_str(b));
}

}  // namespace

int Tape::check(Handle h) const {
  if (h < 0 || std::size_t(h) >= nodes_.size()) throw std::out_of_range("tape: bad handle");
  return h;
}

Tape::Handle Tape::push(Node n) {
  n.adjoint = Matrix::zeros(n.value.rows, n.value.cols);
  nodes_.push_back(std::move(n));
  return Handle(nodes_.size() - 1);
}

Tape::Handle Tape::leaf(Matrix m) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(m);
  return push(std::move(n));
}

Tape::Handle Tape::matmul(Handle a, Handle b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols != vb.rows) bad_shapes("matmul", va, vb);
  Node n;
  n.kind = OpKind::matmul;
  n.a = a;
  n.b = b;
  n.value = Matrix(va.rows, vb.cols);
  kernels::ops().gemm_nn(n.value.data.data(), va.data.data(), vb.data.data(), va.rows, va.cols,
                         vb.cols);
  return push(std::move(n));
}

Tape::Handle Tape::add(Handle a, Handle b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (!va.same_shape(vb)) bad_shapes("add", va, vb);
  Node n;
  n.kind = OpKind::add;
  n.a = a;
  n.b = b;
  n.value = Matrix(va.rows, va.cols);
  kernels::ops().add(n.value.data.data(), va.data.data(), vb.data.data(), va.size());
  return push(std::move(n));
}

Tape::Handle Tape::add_row(Handle a, Handle row) {
  const Matrix& va = value(a);
  const Matrix& vr = value(row);
  if (vr.rows != 1 || vr.cols != va.cols) bad_shapes("add_row", va, vr);
  Node n;
  n.kind = OpKind::add_row;
  n.a = a;
  n.b = row;
  n.value = Matrix(va.rows, va.cols);
  for (int i = 0; i < va.rows; ++i)
    kernels::ops().add(&n.value(i, 0), &va.data[std::size_t(i) * va.cols], vr.data.data(),
                       std::size_t(va.cols));
  return push(std::move(n));
}

Tape::Handle Tape::relu(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::relu;
  n.a = a;
  n.value = Matrix(va.rows, va.cols);
  kernels::ops().relu(n.value.data.data(), va.data.data(), va.size());
  return push(std::move(n));
}

Tape::Handle Tape::tanh(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::tanh_op;
  n.a = a;
  n.value = Matrix(va.rows, va.cols);
  for (std::size_t i = 0; i < va.size(); ++i) n.value.data[i] = std::tanh(va.data[i]);
  return push(std::move(n));
}

Tape::Handle Tape::exp(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::exp_op;
  n.a = a;
  n.value = Matrix(va.rows, va.cols);
  for (std::size_t i = 0; i < va.size(); ++i) n.value.data[i] = std::exp(va.data[i]);
  return push(std::move(n));
}

Tape::Handle Tape::log(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::log_op;
  n.a = a;
  n.value = Matrix(va.rows, va.cols);
  for (std::size_t i = 0; i < va.size(); ++i) n.value.data[i] = std::log(va.data[i]);
  return push(std::move(n));
}

Tape::Handle Tape::softmax(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::softmax;
  n.a = a;
  n.value = Matrix(va.rows, va.cols);
  for (int i = 0; i < va.rows; ++i) {
    double mx = va(i, 0);
    for (int j = 1; j < va.cols; ++j) mx = va(i, j) > mx ? va(i, j) : mx;
    double s = 0.0;
    for (int j = 0; j < va.cols; ++j) {
      double e = std::exp(va(i, j) - mx);
      n.value(i, j) = e;
      s += e;
    }
    for (int j = 0; j < va.cols; ++j) n.value(i, j) /= s;
  }
  return push(std::move(n));
}

Tape::Handle Tape::sum(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::sum;
  n.a = a;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (double x : va.data) s += x;
  n.value(0, 0) = s;
  return push(std::move(n));
}

Tape::Handle Tape::mean(Handle a) {
  const Matrix& va = value(a);
  if (va.size() == 0) throw shape_error("mean: empty matrix");
  Node n;
  n.kind = OpKind::mean;
  n.a = a;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (double x : va.data) s += x;
  n.value(0, 0) = s / double(va.size());
  return push(std::move(n));
}

Tape::Handle Tape::scale(Handle a, double s) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::scale;
  n.a = a;
  n.s = s;
  n.value = Matrix(va.rows, va.cols);
  kernels::ops().scale(n.value.data.data(), va.data.data(), s, va.size());
  return push(std::move(n));
}

Tape::Handle Tape::slice_rows(Handle a, int r0, int r1) {
  const Matrix& va = value(a);
  if (r0 < 0 || r1 > va.rows || r0 >= r1)
    throw shape_error("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) +
                      ") of " + shape_str(va));
  Node n;
  n.kind = OpKind::slice_rows;
  n.a = a;
  n.r0 = r0;
  n.r1 = r1;
  n.value = Matrix(r1 - r0, va.cols);
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < va.cols; ++j) n.value(i - r0, j) = va(i, j);
  return push(std::move(n));
}

Tape::Handle Tape::concat_rows(const std::vector<Handle>& parts) {
  if (parts.empty()) throw shape_error("concat_rows: no inputs");
  int cols = value(parts[0]).cols;
  int rows = 0;
  for (Handle h : parts) {
    const Matrix& v = value(h);
    if (v.cols != cols) bad_shapes("concat_rows", value(parts[0]), v);
    rows += v.rows;
  }
  Node n;
  n.kind = OpKind::concat_rows;
  n.parts.assign(parts.begin(), parts.end());
  n.value = Matrix(rows, cols);
  int at = 0;
  for (Handle h : parts) {
    const Matrix& v = value(h);
    for (int i = 0; i < v.rows; ++i)
      for (int j = 0; j < cols; ++j) n.value(at + i, j) = v(i, j);
    at += v.rows;
  }
  return push(std::move(n));
}

Tape::Handle Tape::transpose(Handle a) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::transpose;
  n.a = a;
  n.value = Matrix(va.cols, va.rows);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) n.value(j, i) = va(i, j);
  return push(std::move(n));
}

void Tape::backward(Handle output) {
  check(output);
  Node& out = nodes_[output];
  if (out.value.rows != 1 || out.value.cols != 1)
    throw shape_error("backward: output must be 1x1, got " + shape_str(out.value));

  for (auto& n : nodes_) {
    n.adjoint.fill(0.0);
    n.touched = false;
  }
  out.adjoint(0, 0) = 1.0;
  out.touched = true;

  const auto& K = kernels::ops();
  for (int k = output; k >= 0; --k) {
    Node& n = nodes_[k];
    if (!n.touched) continue;
    const Matrix& d = n.adjoint;
    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::matmul: {
        Node& pa = nodes_[n.a];
        Node& pb = nodes_[n.b];
        // da += d * b^T ; db += a^T * d
        K.gemm_acc_nt(pa.adjoint.data.data(), d.data.data(), pb.value.data.data(), d.rows,
                      d.cols, pa.value.cols);
        K.gemm_acc_tn(pb.adjoint.data.data(), pa.value.data.data(), d.data.data(),
                      pa.value.cols, pa.value.rows, d.cols);
        pa.touched = pb.touched = true;
        break;
      }
      case OpKind::add: {
        Node& pa = nodes_[n.a];
        Node& pb = nodes_[n.b];
        K.acc(pa.adjoint.data.data(), d.data.data(), d.size());
        K.acc(pb.adjoint.data.data(), d.data.data(), d.size());
        pa.touched = pb.touched = true;
        break;
      }
      case OpKind::add_row: {
        Node& pa = nodes_[n.a];
        Node& pr = nodes_[n.b];
        K.acc(pa.adjoint.data.data(), d.data.data(), d.size());
        for (int i = 0; i < d.rows; ++i)
          K.acc(pr.adjoint.data.data(), &d.data[std::size_t(i) * d.cols], std::size_t(d.cols));
        pa.touched = pr.touched = true;
        break;
      }
      case OpKind::relu: {
        Node& pa = nodes_[n.a];
        K.relu_mask_acc(pa.adjoint.data.data(), d.data.data(), pa.value.data.data(), d.size());
        pa.touched = true;
        break;
      }
      case OpKind::tanh_op: {
        Node& pa = nodes_[n.a];
        for (std::size_t i = 0; i < d.size(); ++i)
          pa.adjoint.data[i] += d.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
        pa.touched = true;
        break;
      }
      case OpKind::exp_op: {
        Node& pa = nodes_[n.a];
        for (std::size_t i = 0; i < d.size(); ++i)
          pa.adjoint.data[i] += d.data[i] * n.value.data[i];
        pa.touched = true;
        break;
      }
      case OpKind::log_op: {
        Node& pa = nodes_[n.a];
        for (std::size_t i = 0; i < d.size(); ++i)
          pa.adjoint.data[i] += d.data[i] / pa.value.data[i];
        pa.touched = true;
        break;
      }
      case OpKind::softmax: {
        Node& pa = nodes_[n.a];
        for (int i = 0; i < d.rows; ++i) {
          double dot = 0.0;
          for (int j = 0; j < d.cols; ++j) dot += d(i, j) * n.value(i, j);
          for (int j = 0; j < d.cols; ++j)
            pa.adjoint(i, j) += n.value(i, j) * (d(i, j) - dot);
        }
        pa.touched = true;
        break;
      }
      case OpKind::sum: {
        Node& pa = nodes_[n.a];
        const double s = d(0, 0);
        for (auto& x : pa.adjoint.data) x += s;
        pa.touched = true;
        break;
      }
      case OpKind::mean: {
        Node& pa = nodes_[n.a];
        const double s = d(0, 0) / double(pa.value.size());
        for (auto& x : pa.adjoint.data) x += s;
        pa.touched = true;
        break;
      }
      case OpKind::scale: {
        Node& pa = nodes_[n.a];
        K.axpy_acc(pa.adjoint.data.data(), n.s, d.data.data(), d.size());
        pa.touched = true;
        break;
      }
      case OpKind::slice_rows: {
        Node& pa = nodes_[n.a];
        for (int i = 0; i < d.rows; ++i)
          K.acc(&pa.adjoint(n.r0 + i, 0), &d.data[std::size_t(i) * d.cols],
                std::size_t(d.cols));
        pa.touched = true;
        break;
      }
      case OpKind::concat_rows: {
        int at = 0;
        for (int h : n.parts) {
          Node& p = nodes_[h];
          for (int i = 0; i < p.value.rows; ++i)
            K.acc(&p.adjoint(i, 0), &d.data[std::size_t(at + i) * d.cols],
                  std::size_t(d.cols));
          at += p.value.rows;
          p.touched = true;
        }
        break;
      }
      case OpKind::transpose: {
        Node& pa = nodes_[n.a];
        for (int i = 0; i < d.rows; ++i)
          for (int j = 0; j < d.cols; ++j) pa.adjoint(j, i) += d(i, j);
        pa.touched = true;
        break;
      }
    }
  }
}

}  // namespace cav::num
