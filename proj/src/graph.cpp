#include "bird/graph.hpp"

#include "bird/error.hpp"

namespace bird {

Param& ParamStore::create(const std::string& name, std::vector<int> shape) {
    return create(name, Tensor::zeros(std::move(shape)));
}

Param& ParamStore::create(const std::string& name, Tensor init) {
    if (index_.count(name))
        throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Param>(name, std::move(init)));
    Param& p = *params_.back();
    index_[name] = &p;
    return p;
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *it->second;
}

Param* ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

void ParamStore::zero_grads() {
    for (auto& p : params_)
        std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);
}

size_t ParamStore::total_values() const {
    size_t n = 0;
    for (auto& p : params_) n += p->value.v.size();
    return n;
}

NodeId Graph::constant(Tensor v) {
    Node n;
    n.val = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.val = p.value;
    n.bound = &p;
    nodes_.push_back(std::move(n));
    NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    param_nodes_[&p] = id;
    return id;
}

NodeId Graph::make(Tensor out, std::vector<NodeId> parents, BackwardFn fn) {
    Node n;
    n.val = std::move(out);
    n.parents = std::move(parents);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Graph::grad(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.val.shape);
        n.grad_alloc = true;
    }
    return n.grad;
}

void Graph::backward(NodeId root) {
    if (val(root).numel() != 1)
        throw ConfigError("backward root must be scalar, got " + val(root).shape_str());
    grad(root).v[0] = 1.0;
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_alloc) continue;  // not on a path to the root
        if (n.bound) {
            for (size_t i = 0; i < n.grad.v.size(); ++i) n.bound->grad.v[i] += n.grad.v[i];
        } else if (n.backward) {
            n.backward(*this, id);
        }
    }
}

}  // namespace bird
