#include "vary/graph.hpp"

#include <memory>
#include <utility>

namespace vary {

Graph::Id Graph::push(Tensor val, bool needs_grad, std::function<void(Graph&)> back) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

void Graph::ensure_grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& v = value(id);
    if (!n.grad.same_shape(v)) n.grad = Tensor::zeros(v.shape());
}

Graph::Id Graph::constant(Tensor t) { return push(std::move(t), false); }

Graph::Id Graph::param(Parameter& p) {
    // leaves reference the parameter tensor; no copy
    Id id = push(Tensor{}, true);
    nodes_[static_cast<size_t>(id)].leaf = &p;
    return id;
}

Graph::Id Graph::matmul(Id a, Id b) {
    Tensor y = kern::matmul(value(a), value(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, b, out](Graph& g) {
            const Tensor& dy = g.grad(out);
            if (g.needs_grad(a)) {
                g.ensure_grad(a);
                Tensor da = kern::matmul_bt(dy, g.value(b));
                kern::add_inplace(g.grad(a), da.reshaped(g.value(a).shape()));
            }
            if (g.needs_grad(b)) {
                g.ensure_grad(b);
                kern::matmul_at_acc(g.value(a), dy, g.grad(b));
            }
        };
    }
    return out;
}

Graph::Id Graph::add(Id a, Id b) {
    Tensor y = kern::add(value(a), value(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, b, out](Graph& g) {
            const Tensor& dy = g.grad(out);
            for (Id src : {a, b}) {
                if (!g.needs_grad(src)) continue;
                g.ensure_grad(src);
                kern::add_inplace(g.grad(src), dy.reshaped(g.value(src).shape()));
            }
        };
    }
    return out;
}

Graph::Id Graph::add_bias(Id x, Id bias) {
    Tensor y = value(x);
    kern::add_rowvec_inplace(y, value(bias));
    const bool ng = needs_grad(x) || needs_grad(bias);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [x, bias, out](Graph& g) {
            const Tensor& dy = g.grad(out);
            if (g.needs_grad(x)) {
                g.ensure_grad(x);
                kern::add_inplace(g.grad(x), dy.reshaped(g.value(x).shape()));
            }
            if (g.needs_grad(bias)) {
                g.ensure_grad(bias);
                Tensor& db = g.grad(bias);
                const int m = dy.rows(), n = dy.cols();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) db[static_cast<size_t>(j)] += dy.at2(i, j);
            }
        };
    }
    return out;
}

Graph::Id Graph::scale(Id a, double s) {
    Tensor y = value(a);
    for (size_t i = 0; i < y.numel(); ++i) y[i] *= s;
    const bool ng = needs_grad(a);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, s, out](Graph& g) {
            g.ensure_grad(a);
            const Tensor& dy = g.grad(out);
            Tensor& da = g.grad(a);
            for (size_t i = 0; i < dy.numel(); ++i) da[i] += s * dy[i];
        };
    }
    return out;
}

Graph::Id Graph::gelu(Id a) {
    // cache tanh(u) so backward avoids re-evaluating it
    const Tensor& x = value(a);
    Tensor y = x;
    auto tcache = std::make_shared<std::vector<double>>(x.numel());
    constexpr double c = 0.7978845608028653558798921198687;
    for (size_t i = 0; i < y.numel(); ++i) {
        const double v = x[i];
        const double t = kern::fast_tanh(c * (v + 0.044715 * v * v * v));
        (*tcache)[i] = t;
        y[i] = 0.5 * v * (1.0 + t);
    }
    const bool ng = needs_grad(a);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, out, tcache](Graph& g) {
            g.ensure_grad(a);
            const Tensor& dy = g.grad(out);
            const Tensor& x = g.value(a);
            Tensor& da = g.grad(a);
            for (size_t i = 0; i < dy.numel(); ++i) {
                const double v = x[i];
                const double t = (*tcache)[i];
                const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
                da[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
            }
        };
    }
    return out;
}

Graph::Id Graph::layernorm(Id x, Id gamma, Id beta) {
    auto cache = std::make_shared<kern::LayerNormCache>();
    Tensor y = kern::layernorm(value(x), value(gamma), value(beta), cache.get());
    const bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [x, gamma, beta, out, cache](Graph& g) {
            g.ensure_grad(x);
            g.ensure_grad(gamma);
            g.ensure_grad(beta);
            kern::layernorm_bwd(g.value(x), g.value(gamma), *cache, g.grad(out), g.grad(x),
                                g.grad(gamma), g.grad(beta));
        };
    }
    return out;
}

Graph::Id Graph::conv3x3s2(Id x, Id w, Id b) {
    Tensor y = kern::conv3x3s2(value(x), value(w), value(b));
    const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [x, w, b, out](Graph& g) {
            g.ensure_grad(x);
            g.ensure_grad(w);
            g.ensure_grad(b);
            kern::conv3x3s2_bwd(g.value(x), g.value(w), g.grad(out), g.grad(x), g.grad(w),
                                g.grad(b));
        };
    }
    return out;
}

Graph::Id Graph::attention(Id x, Id wq, Id bq, Id wk, Id bk, Id wv, Id bv, Id wo, Id bo,
                           int heads, bool causal) {
    auto cache = std::make_shared<kern::AttentionCache>();
    Tensor y = kern::attention(value(x), value(wq), value(bq), value(wk), value(bk), value(wv),
                               value(bv), value(wo), value(bo), heads, causal, cache.get());
    const bool ng = needs_grad(x) || needs_grad(wq) || needs_grad(wo);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [=](Graph& g) {
            g.ensure_grad(x);
            for (Id p : {wq, bq, wk, bk, wv, bv, wo, bo}) g.ensure_grad(p);
            kern::attention_bwd(g.value(x), g.value(wq), g.value(wk), g.value(wv), g.value(wo),
                                heads, causal, *cache, g.grad(out), g.grad(x), g.grad(wq),
                                g.grad(bq), g.grad(wk), g.grad(bk), g.grad(wv), g.grad(bv),
                                g.grad(wo), g.grad(bo));
        };
    }
    return out;
}

Graph::Id Graph::embed_rows(Id table, std::vector<int> ids) {
    const Tensor& tab = value(table);
    const int n = tab.cols();
    Tensor y({static_cast<int>(ids.size()), n});
    for (size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || id >= tab.rows()) throw ShapeError("embed_rows: id out of range");
        for (int j = 0; j < n; ++j) y.at2(static_cast<int>(r), j) = tab.at2(id, j);
    }
    const bool ng = needs_grad(table);
    Id out = push(std::move(y), ng);
    if (ng) {
        auto ids_keep = std::make_shared<std::vector<int>>(std::move(ids));
        nodes_[static_cast<size_t>(out)].back = [table, out, ids_keep](Graph& g) {
            g.ensure_grad(table);
            const Tensor& dy = g.grad(out);
            Tensor& dt = g.grad(table);
            const int n = dy.cols();
            for (size_t r = 0; r < ids_keep->size(); ++r) {
                const int id = (*ids_keep)[r];
                for (int j = 0; j < n; ++j)
                    dt.at2(id, j) += dy.at2(static_cast<int>(r), j);
            }
        };
    }
    return out;
}

Graph::Id Graph::slice_rows(Id x, int start, int len) {
    const Tensor& src = value(x);
    const int n = src.cols();
    if (start < 0 || start + len > src.rows()) throw ShapeError("slice_rows: range out of bounds");
    Tensor y({len, n});
    for (int r = 0; r < len; ++r)
        for (int j = 0; j < n; ++j) y.at2(r, j) = src.at2(start + r, j);
    const bool ng = needs_grad(x);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [x, out, start, len](Graph& g) {
            g.ensure_grad(x);
            const Tensor& dy = g.grad(out);
            Tensor& dx = g.grad(x);
            const int n = dy.cols();
            for (int r = 0; r < len; ++r)
                for (int j = 0; j < n; ++j) dx.at2(start + r, j) += dy.at2(r, j);
        };
    }
    return out;
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int n = value(parts[0]).cols();
    int total = 0;
    bool ng = false;
    for (Id p : parts) {
        if (value(p).cols() != n) throw ShapeError("concat_rows: column mismatch");
        total += value(p).rows();
        ng = ng || needs_grad(p);
    }
    Tensor y({total, n});
    int row = 0;
    for (Id p : parts) {
        const Tensor& src = value(p);
        for (int r = 0; r < src.rows(); ++r, ++row)
            for (int j = 0; j < n; ++j) y.at2(row, j) = src.at2(r, j);
    }
    Id out = push(std::move(y), ng);
    if (ng) {
        auto keep = std::make_shared<std::vector<Id>>(parts);
        nodes_[static_cast<size_t>(out)].back = [out, keep](Graph& g) {
            const Tensor& dy = g.grad(out);
            const int n = dy.cols();
            int row = 0;
            for (Id p : *keep) {
                const int r0 = g.value(p).rows();
                if (g.needs_grad(p)) {
                    g.ensure_grad(p);
                    Tensor& dp = g.grad(p);
                    for (int r = 0; r < r0; ++r)
                        for (int j = 0; j < n; ++j) dp.at2(r, j) += dy.at2(row + r, j);
                }
                row += r0;
            }
        };
    }
    return out;
}

Graph::Id Graph::concat_cols(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rows() != tb.rows()) throw ShapeError("concat_cols: row mismatch");
    const int m = ta.rows(), na = ta.cols(), nb = tb.cols();
    Tensor y({m, na + nb});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < na; ++j) y.at2(i, j) = ta.at2(i, j);
        for (int j = 0; j < nb; ++j) y.at2(i, na + j) = tb.at2(i, j);
    }
    const bool ng = needs_grad(a) || needs_grad(b);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, b, out, na, nb](Graph& g) {
            const Tensor& dy = g.grad(out);
            const int m = dy.rows();
            if (g.needs_grad(a)) {
                g.ensure_grad(a);
                Tensor& da = g.grad(a);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < na; ++j) da.at2(i, j) += dy.at2(i, j);
            }
            if (g.needs_grad(b)) {
                g.ensure_grad(b);
                Tensor& db = g.grad(b);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < nb; ++j) db.at2(i, j) += dy.at2(i, na + j);
            }
        };
    }
    return out;
}

Graph::Id Graph::reshape(Id x, std::vector<int> shape) {
    Tensor y = value(x).reshaped(shape);
    const bool ng = needs_grad(x);
    Id out = push(std::move(y), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [x, out](Graph& g) {
            g.ensure_grad(x);
            kern::add_inplace(g.grad(x), g.grad(out).reshaped(g.value(x).shape()));
        };
    }
    return out;
}

Graph::Id Graph::masked_ce(Id logits, std::vector<int> next_ids) {
    auto ids_keep = std::make_shared<std::vector<int>>(std::move(next_ids));
    const double loss = kern::masked_cross_entropy(value(logits), *ids_keep, nullptr);
    const bool ng = needs_grad(logits);
    Id out = push(Tensor::from({1}, {loss}), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [logits, out, ids_keep](Graph& g) {
            g.ensure_grad(logits);
            Tensor dlogits = Tensor::zeros(g.value(logits).shape());
            kern::masked_cross_entropy(g.value(logits), *ids_keep, &dlogits);
            const double upstream = g.grad(out)[0];
            Tensor& dst = g.grad(logits);
            for (size_t i = 0; i < dst.numel(); ++i) dst[i] += upstream * dlogits[i];
        };
    }
    return out;
}

Graph::Id Graph::sum_mul(Id a, Tensor fixed) {
    const Tensor& x = value(a);
    if (!x.same_shape(fixed)) throw ShapeError("sum_mul: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) s += x[i] * fixed[i];
    const bool ng = needs_grad(a);
    auto keep = std::make_shared<Tensor>(std::move(fixed));
    Id out = push(Tensor::from({1}, {s}), ng);
    if (ng) {
        nodes_[static_cast<size_t>(out)].back = [a, out, keep](Graph& g) {
            g.ensure_grad(a);
            const double upstream = g.grad(out)[0];
            Tensor& da = g.grad(a);
            for (size_t i = 0; i < da.numel(); ++i) da[i] += upstream * (*keep)[i];
        };
    }
    return out;
}

void Graph::backward(Id loss_node) {
    if (value(loss_node).numel() != 1) throw ShapeError("backward: loss must be scalar");
    ensure_grad(loss_node);
    nodes_[static_cast<size_t>(loss_node)].grad[0] = 1.0;
    for (Id id = loss_node; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || !n.grad.same_shape(value(id))) continue;
        if (n.back) n.back(*this);
        if (n.leaf) {
            n.leaf->ensure_grad();
            kern::add_inplace(n.leaf->grad, n.grad);
        }
    }
}

}  // namespace vary
