#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvgmn/tensor.hpp"

namespace mvgmn {

using ParamId = std::size_t;

/// Named trainable tensors. Ids are dense and stable for the life of the
/// store; they double as the registration order used by checkpoints.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  const Tensor& value(ParamId id) const { return values_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  std::optional<ParamId> find(const std::string& name) const;

  /// Total number of trainable scalars.
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
  /// Gradient buffer of input `i`, or nullptr when that input is a constant.
  Tensor* input_grad(std::size_t i);
};

/// Handle to a value produced by an operation. Copies share the node.
class Var {
 public:
  Var() = default;
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const noexcept { return static_cast<bool>(node_); }

  Tape* tape() const noexcept { return tape_; }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  friend class Tape;
  Var(std::shared_ptr<Node> node, Tape* tape) : node_(std::move(node)), tape_(tape) {}

  std::shared_ptr<Node> node_;
  Tape* tape_ = nullptr;
};

/// Records operations for one reverse pass over a read-only ParamStore.
/// A tape is single-writer; run independent samples on independent tapes.
/// With `record == false` nothing is retained, so intermediates are freed as
/// soon as their handles go out of scope (inference mode).
class Tape {
 public:
  explicit Tape(const ParamStore& params, bool record = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Leaf for a parameter; repeated calls return the same node so fan-out
  /// accumulates into a single gradient.
  Var param(ParamId id);

  /// Appends an operation result. Used by the op library.
  Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

  /// Reverse pass from a single-element loss. May be called once.
  void backward(const Var& loss);

  /// Gradient of a parameter after backward(); zeros when unused.
  Tensor param_grad(ParamId id) const;

  std::size_t op_count() const noexcept { return nodes_.size(); }

 private:
  const ParamStore& params_;
  bool record_;
  bool backward_done_ = false;
  std::vector<std::shared_ptr<Node>> nodes_;
  std::vector<std::shared_ptr<Node>> param_nodes_;
};

}  // namespace mvgmn
