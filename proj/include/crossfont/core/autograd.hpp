#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "crossfont/core/tensor.hpp"

namespace crossfont {

/// Thread-local switch for graph recording. Forward passes under NoGradGuard
/// build no nodes, so frozen-model evaluation is allocation-light and
/// re-entrant across threads.
struct GradMode {
    static bool& flag() {
        thread_local bool enabled = true;
        return enabled;
    }
    static bool enabled() { return flag(); }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::flag()) { GradMode::flag() = false; }
    ~NoGradGuard() { GradMode::flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class EnableGradGuard {
public:
    EnableGradGuard() : prev_(GradMode::flag()) { GradMode::flag() = true; }
    ~EnableGradGuard() { GradMode::flag() = prev_; }

private:
    bool prev_;
};

template <typename T>
class Var;

/// One vertex of the backward graph. `backward` maps the output gradient to
/// per-parent gradient contributions; it is itself written in terms of Var
/// ops, so running it with recording on yields gradients that are again
/// differentiable (gradient penalty needs exactly that).
template <typename T>
struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::vector<Var<T>> parents;
    std::function<std::vector<Var<T>>(const Var<T>& grad_out)> backward;
};

template <typename T>
class Var {
public:
    Var() = default;

    explicit Var(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var leaf(Tensor<T> value) { return Var(std::move(value), true); }
    static Var constant(Tensor<T> value) { return Var(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    const std::vector<long>& shape() const { return node_->value.shape(); }
    long size() const { return node_->value.size(); }

    T item() const {
        require(node_->value.size() == 1, "Var::item: tensor has " +
                                              std::to_string(node_->value.size()) + " elements");
        return node_->value[0];
    }

    /// Same storage, no history, no grad requirement.
    Var detach() const { return Var(node_->value, false); }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

/// Build `out` as a recorded op when recording applies, else as a plain
/// constant result.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<std::vector<Var<T>>(const Var<T>&)> backward) {
    bool needs = false;
    if (GradMode::enabled()) {
        for (const auto& p : parents)
            if (p.requires_grad()) {
                needs = true;
                break;
            }
    }
    if (!needs) return Var<T>(std::move(value), false);
    Var<T> out(std::move(value), true);
    out.node()->parents = std::move(parents);
    out.node()->backward = std::move(backward);
    return out;
}

}  // namespace detail

template <typename T>
using GradMap = std::unordered_map<const Node<T>*, Var<T>>;

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);  // defined in ops.hpp

/// Reverse-mode sweep from a scalar root. Gradients accumulate into a fresh
/// map; graph nodes themselves are never mutated, so concurrent backwards on
/// disjoint graphs sharing parameters are safe.
///
/// With create_graph=true the returned gradients carry their own history and
/// can be differentiated again. With leaves_only=true, entries for interior
/// nodes are dropped as soon as they have been consumed — callers that keep a
/// GradMap beyond the graph's lifetime must use this, because interior node
/// addresses are recycled once the graph is freed.
template <typename T>
GradMap<T> backward(const Var<T>& root, bool create_graph = false, bool leaves_only = false) {
    require(root.defined() && root.requires_grad(),
            "backward: root must require grad (did you call it under NoGradGuard?)");
    require(root.size() == 1, "backward: root must be scalar, has " + shape_str(root.shape()));

    // iterative topological order over the requires_grad subgraph
    std::vector<Node<T>*> order;
    std::unordered_set<const Node<T>*> seen;
    {
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        seen.insert(root.node());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx].node();
                ++idx;
                if (p && n->parents[idx - 1].requires_grad() && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    GradMap<T> grads;
    grads[root.node()] = Var<T>(Tensor<T>::ones(root.shape()), false);

    // order is child-last; walk from the root down
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        auto g_it = grads.find(n);
        if (g_it == grads.end() || !n->backward) continue;
        std::vector<Var<T>> contribs;
        Var<T> grad_here = g_it->second;
        if (create_graph) {
            EnableGradGuard on;
            contribs = n->backward(grad_here);
        } else {
            NoGradGuard off;
            contribs = n->backward(grad_here);
        }
        require(contribs.size() == n->parents.size(),
                "backward: op returned wrong number of parent grads");
        if (leaves_only) grads.erase(g_it);
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            if (!contribs[i].defined()) continue;
            const auto& parent = n->parents[i];
            if (!parent.requires_grad()) continue;
            auto slot = grads.find(parent.node());
            if (slot == grads.end()) {
                grads.emplace(parent.node(), contribs[i]);
            } else {
                if (create_graph) {
                    EnableGradGuard on;
                    slot->second = add(slot->second, contribs[i]);
                } else {
                    NoGradGuard off;
                    slot->second = add(slot->second, contribs[i]);
                }
            }
        }
    }
    return grads;
}

/// Gradient lookup that tolerates unreached leaves (e.g. a parameter that a
/// particular loss does not touch).
template <typename T>
Tensor<T> grad_or_zero(const GradMap<T>& grads, const Var<T>& v) {
    auto it = grads.find(v.node());
    if (it == grads.end()) return Tensor<T>::zeros(v.shape());
    return it->second.value();
}

}  // namespace crossfont
