#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmtraj {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the define-by-run graph. Leaves are parameters/inputs; every
// other node is produced by an op and carries its backward rule.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool reached = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    reached = true;
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor of doubles with shared handle semantics: copying a
/// Tensor aliases the same storage, `clone()` makes an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor from_node(std::shared_ptr<detail::Node> node);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const { return clone(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;
  std::shared_ptr<detail::Node> node_;
};

/// Boolean array with the same row-major layout as Tensor.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> data;

  Mask() = default;
  explicit Mask(Shape s, bool fill = true)
      : shape(std::move(s)), data(mmtraj::numel(shape), fill ? 1 : 0) {}

  std::size_t numel() const { return data.size(); }
  bool operator[](std::size_t i) const { return data[i] != 0; }
  bool at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { data[i * shape[1] + j] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

/// Records operations executed on this thread while it is alive. Ops only
/// build graph edges when a tape is active and an input requires grad, so
/// inference outside a tape allocates nothing extra.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<detail::Node> node);
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed each time.
  void backward(const Tensor& loss);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
};

bool finite_checks_enabled();

}  // namespace mmtraj
