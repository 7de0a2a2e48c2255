#pragma once

// Reverse-mode differentiation on an explicit tape. Nodes are appended in
// creation order, so inputs always precede their consumers and a single
// reverse sweep visits the graph in topological order.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rdv2/tensor.hpp"

namespace rdv2 {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Named parameters in registration order. Names are unique.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Parameter& add(const std::string& name, Tensor value);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    /// Total scalar count over all parameters, optionally restricted to a name prefix.
    std::size_t count(const std::string& prefix = "") const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
    // Set on inference tapes, which do not retain values; the last Var
    // referring to a result frees it.
    std::shared_ptr<const Tensor> held;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t numel() const { return value().numel(); }
};

struct TapeNode {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, std::size_t)> backward;
};

enum class TapeMode { train, inference };

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    /// Inference tapes record no gradients and keep no values of their own.
    explicit Tape(TapeMode mode) : mode_(mode) {}
    bool inference() const { return mode_ == TapeMode::inference; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// A value that never receives gradient.
    Var constant(Tensor value);
    /// A leaf that receives gradient (readable through grad()).
    Var leaf(Tensor value);
    /// A leaf bound to a parameter; backward() adds into param.grad.
    Var param(Parameter& p);

    /// Appends an operation node. `fn` runs during backward only when some input requires grad.
    Var record(std::string op, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);

    const Tensor& value(std::size_t id) const;
    const TapeNode& node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient of a node after backward(); zeros if nothing reached it.
    Tensor grad(Var v) const;
    /// Incoming gradient of `id` while its backward rule runs.
    const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
    /// Accumulation buffer for `id`, zero-initialized on first use.
    Tensor& grad_slot(std::size_t id);
    /// Adds `g` into the gradient of `id` if it requires grad.
    void accumulate(std::size_t id, const Tensor& g);

    /// Runs the reverse sweep from a single-element loss. The tape is consumed;
    /// call reset() before recording a new graph.
    void backward(Var loss);
    void reset();

private:
    Var push(TapeNode n);

    std::deque<TapeNode> nodes_;
    bool consumed_ = false;
    TapeMode mode_ = TapeMode::train;
};

}  // namespace rdv2
