#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every operation in evaluation order; backward() walks it once in reverse.
// Rows are batch elements throughout.

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace ucsbi::ad {

using Mat = Eigen::MatrixXd;

/// Flat parameter vector with named matrix-shaped slots (column-major).
class ParamStore {
 public:
  struct Slot {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };

  int add(std::string name, Eigen::Index rows, Eigen::Index cols);
  Eigen::Map<Mat> view(int slot);
  Eigen::Map<const Mat> view(int slot) const;
  const std::vector<Slot>& slots() const { return slots_; }
  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

 private:
  std::vector<Slot> slots_;
  Eigen::VectorXd values_;
};

struct Var {
  int id = -1;
};

class Tape {
 public:
  explicit Tape(bool record_backward = true) : record_(record_backward) {}

  Var constant(Mat value);
  Var param(const ParamStore& store, int slot);

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  Eigen::Index rows(Var v) const { return value(v).rows(); }
  Eigen::Index cols(Var v) const { return value(v).cols(); }

  Var matmul(Var a, Var b);
  /// Elementwise product with a constant; `m` must outlive the tape.
  Var mask(Var a, const Mat& m);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // row is 1 x cols(a), broadcast over rows
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var relu(Var a);
  Var exp(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);
  Var cols(Var a, Eigen::Index start, Eigen::Index count);
  Var reverse_cols(Var a);
  Var row_sum(Var a);  // rows x 1
  Var sum_all(Var a);  // 1 x 1
  Var mean_all(Var a);

  /// Custom node: `value` computed by the caller, `backward(out_grad)` must
  /// return one gradient per input, shaped like that input.
  Var custom(std::vector<Var> inputs, Mat value,
             std::function<std::vector<Mat>(const Mat& out_grad)> backward);

  /// Seeds d(out)/d(out) = 1 (out must be 1 x 1) and propagates. Parameter
  /// gradients are added into `grad`, laid out like the store's values.
  void backward(Var out, Eigen::VectorXd& grad);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> back;
    int param_slot = -1;
    const ParamStore* store = nullptr;
  };

  Var push(Mat value, std::vector<int> inputs, std::function<void(Tape&, int)> back);
  void accumulate(int id, const Mat& g);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace ucsbi::ad
