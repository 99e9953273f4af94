#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vary/kernels.hpp"
#include "vary/tensor.hpp"

namespace vary {

// A trainable tensor. Gradients accumulate across the samples of a batch;
// the optimizer consumes and re-zeros them. Adam moments are allocated on
// first use so inference-only models never pay for them.
//
// Initial values are snapped to the float32 grid: the checkpoint wire format
// is float32, and starting on-grid makes save/load a bit-level no-op for
// parameters that training never touched (the freeze contract).
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    Tensor adam_m, adam_v;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        for (size_t i = 0; i < value.numel(); ++i)
            value[i] = static_cast<double>(static_cast<float>(value[i]));
    }

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor::zeros(value.shape());
    }
    void zero_grad() {
        if (grad.same_shape(value))
            for (size_t i = 0; i < grad.numel(); ++i) grad[i] = 0.0;
    }
};

// Per-step reverse-mode tape. Node values are computed eagerly on op
// creation; backward() replays the tape in reverse. Creation order is the
// topological order, so no sorting is needed.
class Graph {
public:
    using Id = int;

    Id constant(Tensor t);
    Id param(Parameter& p);

    const Tensor& value(Id id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.leaf ? n.leaf->value : n.val;
    }
    Tensor& grad(Id id) { return nodes_[static_cast<size_t>(id)].grad; }
    bool needs_grad(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    Id add_bias(Id x, Id bias);              // rows of x += bias
    Id linear(Id x, Id w, Id b) { return add_bias(matmul(x, w), b); }
    Id scale(Id a, double s);
    Id gelu(Id a);
    Id layernorm(Id x, Id gamma, Id beta);
    Id conv3x3s2(Id x, Id w, Id b);
    Id attention(Id x, Id wq, Id bq, Id wk, Id bk, Id wv, Id bv, Id wo, Id bo,
                 int heads, bool causal);
    Id embed_rows(Id table, std::vector<int> ids);
    Id slice_rows(Id x, int start, int len);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(Id a, Id b);
    Id reshape(Id x, std::vector<int> shape);
    // mean cross-entropy of logits row t against next_ids[t] (< 0 = unscored)
    Id masked_ce(Id logits, std::vector<int> next_ids);
    // scalar sum(a * fixed); gradcheck helper losses use this
    Id sum_mul(Id a, Tensor fixed);

    void backward(Id loss_node);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        Parameter* leaf = nullptr;
        std::function<void(Graph&)> back;
    };

    Id push(Tensor val, bool needs_grad, std::function<void(Graph&)> back = nullptr);
    void ensure_grad(Id id);

    std::vector<Node> nodes_;
};

}  // namespace vary
