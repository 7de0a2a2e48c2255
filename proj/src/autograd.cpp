#include "rdv2/autograd.hpp"

#include "rdv2/errors.hpp"

namespace rdv2 {

Parameter& ParamStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Tensor(value.shape(), 0.0, value.dtype());
    p->value = std::move(value);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return *params_[it->second];
}

std::size_t ParamStore::count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p->name.compare(0, prefix.size(), prefix) == 0) n += p->value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
}

const Tensor& Var::value() const {
    if (held) return *held;
    if (!tape) throw ContractError("value of an unbound variable");
    return tape->value(id);
}

const Tensor& Tape::value(std::size_t id) const {
    if (inference()) throw ContractError("inference tapes do not retain values by node id");
    return nodes_[id].value;
}

Var Tape::push(TapeNode n) {
    if (!inference()) {
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1, nullptr};
    }
    Var v{this, nodes_.size(), std::make_shared<const Tensor>(std::move(n.value))};
    TapeNode stub;
    stub.op = std::move(n.op);
    nodes_.push_back(std::move(stub));
    return v;
}

Var Tape::constant(Tensor value) {
    TapeNode n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
    TapeNode n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = !inference();
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (inference()) {
        // Alias the parameter storage instead of copying it.
        nodes_.push_back(TapeNode{"param:" + p.name, {}, Tensor{}, Tensor{}, false, &p, nullptr});
        return {this, nodes_.size() - 1, std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>{}, &p.value)};
    }
    TapeNode n;
    n.op = "param:" + p.name;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    return push(std::move(n));
}

Var Tape::record(std::string op, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn) {
    if (consumed_) throw ContractError("tape already consumed by backward(); call reset() first");
    TapeNode n;
    n.op = std::move(op);
    for (auto id : inputs) {
        if (id >= nodes_.size()) throw ContractError("tape input refers to a node that does not exist yet");
        n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    }
    n.value = std::move(value);
    if (inference()) return push(std::move(n));
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

Tensor Tape::grad(Var v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor(n.value.shape());
    return n.grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor& slot = grad_slot(id);
    require_same_shape(slot, g, "gradient accumulation");
    for (std::size_t i = 0; i < g.numel(); ++i) slot[i] += g[i];
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
    if (consumed_) throw ContractError("backward: tape already consumed; call reset() first");
    if (inference()) throw ContractError("backward: inference tapes record no gradients");
    if (nodes_[loss.id].value.numel() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(nodes_[loss.id].value.shape()));
    consumed_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    grad_slot(loss.id).fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            auto& pg = n.param->grad;
            for (std::size_t k = 0; k < pg.numel(); ++k) pg[k] += n.grad[k];
        }
    }
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

}  // namespace rdv2
