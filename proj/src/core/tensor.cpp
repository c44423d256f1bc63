#include "mmtraj/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mmtraj/errors.hpp"

namespace mmtraj {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(mmtraj::numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
  if (mmtraj::numel(shape) != data.size()) {
    throw DimensionError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " for shape " +
                         shape_str(shape()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw DimensionError("index out of range for " + shape_str(shape()));
    off = off * node_->shape[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return node_->data[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return node_->data[offset(index)]; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->data);
  t.node_->requires_grad = node_->requires_grad && node_->is_leaf;
  return t;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto& root = *loss.node();
  if (!root.requires_grad) throw UsageError("backward on a loss that does not require grad");
  if (root.is_leaf) {
    root.grad_buffer()[0] += 1.0;
    return;
  }
  if (nodes_.empty()) throw UsageError("backward on an empty tape");

  for (auto& n : nodes_) {
    n->grad.assign(n->data.size(), 0.0);
    n->reached = false;
  }
  root.grad[0] = 1.0;
  root.reached = true;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.reached && n.backward) n.backward(n);
  }
}

bool finite_checks_enabled() {
#ifdef MMTRAJ_FINITE_CHECKS
  return true;
#else
  return false;
#endif
}

}  // namespace mmtraj
