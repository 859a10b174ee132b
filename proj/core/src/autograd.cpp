#include "mvgmn/autograd.hpp"

#include "mvgmn/errors.hpp"

namespace mvgmn {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' is not finite");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  for (ParamId i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

Tensor* Node::input_grad(std::size_t i) {
  auto& in = inputs[i];
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

Var Var::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node), nullptr);
}

Tape::Tape(const ParamStore& params, bool record)
    : params_(params), record_(record), param_nodes_(params.size()) {}

Var Tape::param(ParamId id) {
  auto& slot = param_nodes_.at(id);
  if (!slot) {
    slot = std::make_shared<Node>();
    slot->value = params_.value(id);
    slot->requires_grad = record_;
  }
  return Var(slot, this);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  if (!value.all_finite()) throw NumericError("operation produced a non-finite value");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (record_ && needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
    nodes_.push_back(node);
  }
  return Var(std::move(node), this);
}

void Tape::backward(const Var& loss) {
  if (backward_done_) throw InputError("backward() already ran on this tape");
  if (loss.value().size() != 1) throw DimensionError("backward() needs a scalar loss");
  if (!loss.value().all_finite()) throw NumericError("non-finite loss");
  backward_done_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
    // Intermediate buffers are no longer needed once propagated.
    n.backward = nullptr;
  }
}

Tensor Tape::param_grad(ParamId id) const {
  const auto& slot = param_nodes_.at(id);
  if (!slot || slot->grad.empty()) return Tensor(params_.value(id).shape());
  return slot->grad;
}

}  // namespace mvgmn
