#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "bird/tensor.hpp"

namespace bird {

// A learnable tensor with an accumulated gradient. Owned by a ParamStore;
// graphs reference parameters and flush gradients back on backward().
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    explicit Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}
    Param(std::string n, Tensor init)
        : name(std::move(n)), value(std::move(init)), grad(Tensor::zeros(value.shape)) {}
};

// Ordered, name-indexed parameter set. Creation order is fixed by model
// construction and is the canonical order for checkpoints and the optimizer.
class ParamStore {
public:
    Param& create(const std::string& name, std::vector<int> shape);
    Param& create(const std::string& name, Tensor init);
    Param& at(const std::string& name);
    Param* find(const std::string& name);
    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
    void zero_grads();
    size_t size() const { return params_.size(); }
    size_t total_values() const;

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::unordered_map<std::string, Param*> index_;
};

using NodeId = int;

// Define-by-run reverse-mode tape. Nodes are created in topological order;
// backward() sweeps the tape in reverse, accumulating into lazily allocated
// node gradients and flushing parameter-leaf gradients into their Params.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, NodeId)>;

    NodeId constant(Tensor v);
    NodeId param(Param& p);
    NodeId make(Tensor out, std::vector<NodeId> parents, BackwardFn fn);

    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].val; }

    // Gradient buffer of a node, allocated (zeros) on first touch.
    Tensor& grad(NodeId id);
    bool grad_touched(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad_alloc; }

    // root must be a scalar node. Seeds d(root)=1 and runs the reverse sweep.
    void backward(NodeId root);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool grad_alloc = false;
        std::vector<NodeId> parents;
        BackwardFn backward;
        Param* bound = nullptr;
    };
    std::vector<Node> nodes_;
    std::unordered_map<const Param*, NodeId> param_nodes_;
};

}  // namespace bird
