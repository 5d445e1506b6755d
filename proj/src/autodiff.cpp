#include "ucsbi/autodiff.hpp"

#include "ucsbi/errors.hpp"

namespace ucsbi::ad {

int ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index offset = values_.size();
  slots_.push_back({std::move(name), offset, rows, cols});
  values_.conservativeResize(offset + rows * cols);
  values_.segment(offset, rows * cols).setZero();
  return static_cast<int>(slots_.size()) - 1;
}

Eigen::Map<Mat> ParamStore::view(int slot) {
  const Slot& s = slots_[static_cast<std::size_t>(slot)];
  return {values_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Mat> ParamStore::view(int slot) const {
  const Slot& s = slots_[static_cast<std::size_t>(slot)];
  return {values_.data() + s.offset, s.rows, s.cols};
}

Var Tape::push(Mat value, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    n.inputs = std::move(inputs);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = node(id);
  if (n.grad.size() == 0) n.grad = g;
  else n.grad += g;
}

Var Tape::constant(Mat value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(const ParamStore& store, int slot) {
  Var v = push(store.view(slot), {}, nullptr);
  node(v.id).param_slot = slot;
  node(v.id).store = &store;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  return push(value(a) * value(b), {a.id, b.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    const int ia = n.inputs[0], ib = n.inputs[1];
    t.accumulate(ia, n.grad * t.node(ib).value.transpose());
    t.accumulate(ib, t.node(ia).value.transpose() * n.grad);
  });
}

Var Tape::mask(Var a, const Mat& m) {
  const Mat* mp = &m;
  return push(value(a).cwiseProduct(m), {a.id}, [mp](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.cwiseProduct(*mp));
  });
}

Var Tape::add(Var a, Var b) {
  return push(value(a) + value(b), {a.id, b.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad);
    t.accumulate(n.inputs[1], n.grad);
  });
}

Var Tape::add_row(Var a, Var row) {
  Mat out = value(a);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), {a.id, row.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad);
    t.accumulate(n.inputs[1], n.grad.colwise().sum());
  });
}

Var Tape::sub(Var a, Var b) {
  return push(value(a) - value(b), {a.id, b.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad);
    t.accumulate(n.inputs[1], -n.grad);
  });
}

Var Tape::mul(Var a, Var b) {
  return push(value(a).cwiseProduct(value(b)), {a.id, b.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    const int ia = n.inputs[0], ib = n.inputs[1];
    t.accumulate(ia, n.grad.cwiseProduct(t.node(ib).value));
    t.accumulate(ib, n.grad.cwiseProduct(t.node(ia).value));
  });
}

Var Tape::scale(Var a, double k) {
  return push(value(a) * k, {a.id}, [k](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad * k);
  });
}

Var Tape::add_scalar(Var a, double k) {
  return push(value(a).array() + k, {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad);
  });
}

Var Tape::relu(Var a) {
  return push(value(a).cwiseMax(0.0), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Mat& x = t.node(n.inputs[0]).value;
    t.accumulate(n.inputs[0], (x.array() > 0.0).select(n.grad, 0.0));
  });
}

Var Tape::exp(Var a) {
  return push(value(a).array().exp().matrix(), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.cwiseProduct(n.value));
  });
}

Var Tape::square(Var a) {
  return push(value(a).array().square().matrix(), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], 2.0 * n.grad.cwiseProduct(t.node(n.inputs[0]).value));
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  return push(value(a).cwiseMax(lo).cwiseMin(hi), {a.id}, [lo, hi](Tape& t, int self) {
    const Node& n = t.node(self);
    const Mat& x = t.node(n.inputs[0]).value;
    t.accumulate(n.inputs[0], (x.array() >= lo && x.array() <= hi).select(n.grad, 0.0));
  });
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Eigen::Index full = this->cols(a);
  return push(value(a).middleCols(start, count), {a.id}, [start, count, full](Tape& t, int self) {
    const Node& n = t.node(self);
    Mat g = Mat::Zero(n.grad.rows(), full);
    g.middleCols(start, count) = n.grad;
    t.accumulate(n.inputs[0], g);
  });
}

Var Tape::reverse_cols(Var a) {
  return push(value(a).rowwise().reverse(), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.rowwise().reverse());
  });
}

Var Tape::row_sum(Var a) {
  return push(value(a).rowwise().sum(), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Eigen::Index c = t.node(n.inputs[0]).value.cols();
    t.accumulate(n.inputs[0], n.grad.replicate(1, c));
  });
}

Var Tape::sum_all(Var a) {
  Mat s(1, 1);
  s(0, 0) = value(a).sum();
  return push(std::move(s), {a.id}, [](Tape& t, int self) {
    const Node& n = t.node(self);
    const Mat& x = t.node(n.inputs[0]).value;
    t.accumulate(n.inputs[0], Mat::Constant(x.rows(), x.cols(), n.grad(0, 0)));
  });
}

Var Tape::mean_all(Var a) {
  const double k = 1.0 / static_cast<double>(value(a).size());
  return scale(sum_all(a), k);
}

Var Tape::custom(std::vector<Var> inputs, Mat value, std::function<std::vector<Mat>(const Mat&)> backward) {
  std::vector<int> ids;
  for (Var v : inputs) ids.push_back(v.id);
  return push(std::move(value), std::move(ids), [backward = std::move(backward)](Tape& t, int self) {
    const std::vector<Mat> gs = backward(t.node(self).grad);
    const std::vector<int> in = t.node(self).inputs;
    for (std::size_t k = 0; k < in.size(); ++k) t.accumulate(in[k], gs[k]);
  });
}

void Tape::backward(Var out, Eigen::VectorXd& grad) {
  if (!record_) throw Error(ErrorKind::InvalidConfig, "tape was created without backward recording");
  if (value(out).size() != 1) throw Error(ErrorKind::DimensionMismatch, "backward needs a scalar output");
  node(out.id).grad = Mat::Ones(1, 1);
  for (int id = out.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this, id);
    if (n.param_slot >= 0) {
      const auto& s = n.store->slots()[static_cast<std::size_t>(n.param_slot)];
      grad.segment(s.offset, s.rows * s.cols) += Eigen::Map<const Eigen::VectorXd>(n.grad.data(), n.grad.size());
    }
    if (!n.back && n.param_slot < 0) n.grad.resize(0, 0);
  }
}

}  // namespace ucsbi::ad
