#include "drugrec/tape.hpp"

#include <cmath>

#include "drugrec/error.hpp"

namespace drugrec {
namespace ad {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kBceClamp = 1e-12;

} // namespace

Value Tape::push(Tensor out, bool needs_grad, std::function<void()> back) {
    check_forward(out, "op");
    Node n;
    n.out = std::move(out);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

// Closures need the id of the node they belong to before push() runs.
Value Tape::next() const { return Value{static_cast<std::uint32_t>(nodes_.size())}; }

void Tape::check_forward(const Tensor& t, const char* op) const {
    if (check_finite_ && !t.finite()) {
        throw NonFiniteError(std::string(op) + ": non-finite forward value");
    }
}

Value Tape::leaf(Tensor t, bool requires_grad) {
    return push(std::move(t), requires_grad, {});
}

const Tensor& Tape::grad(Value v) const {
    if (!ran_backward_ || nodes_[v.id].grad.numel() == 0) {
        throw Error("grad(): backward() has not populated this node");
    }
    return nodes_[v.id].grad;
}

Value Tape::add(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
    Value r = next();
    push(std::move(out), needs(a) || needs(b), [this, a, b, r]() {
        const Tensor& g = grad_ref(r);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
    return r;
}

Value Tape::sub(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "sub");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
    Value r = next();
    push(std::move(out), needs(a) || needs(b), [this, a, b, r]() {
        const Tensor& g = grad_ref(r);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
    return r;
}

Value Tape::mul(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "mul");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
    Value r = next();
    push(std::move(out), needs(a) || needs(b), [this, a, b, r]() {
        const Tensor& g = grad_ref(r);
        const Tensor& ta2 = val(a);
        const Tensor& tb2 = val(b);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * tb2[i];
            gb[i] += g[i] * ta2[i];
        }
    });
    return r;
}

Value Tape::scale(Value a, double c) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    Value r = next();
    push(std::move(out), needs(a), [this, a, c, r]() {
        const Tensor& g = grad_ref(r);
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    });
    return r;
}

Value Tape::matmul(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out;
    if (ta.rank() == 2 && tb.rank() == 2) {
        if (ta.cols() != tb.rows()) {
            throw ShapeError("matmul: " + ta.shape_str() + " x " + tb.shape_str());
        }
        std::size_t r = ta.rows(), k = ta.cols(), c = tb.cols();
        out = Tensor::zeros({r, c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t m = 0; m < k; ++m) {
                double v = ta.at(i, m);
                if (v == 0.0) continue;
                for (std::size_t j = 0; j < c; ++j) out.at(i, j) += v * tb.at(m, j);
            }
    } else if (ta.rank() == 2 && tb.rank() == 1) {
        if (ta.cols() != tb.numel()) {
            throw ShapeError("matmul: " + ta.shape_str() + " x " + tb.shape_str());
        }
        std::size_t r = ta.rows(), k = ta.cols();
        out = Tensor::zeros({r});
        for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t m = 0; m < k; ++m) acc += ta.at(i, m) * tb[m];
            out[i] = acc;
        }
    } else if (ta.rank() == 1 && tb.rank() == 2) {
        if (ta.numel() != tb.rows()) {
            throw ShapeError("matmul: " + ta.shape_str() + " x " + tb.shape_str());
        }
        std::size_t k = tb.rows(), c = tb.cols();
        out = Tensor::zeros({c});
        for (std::size_t m = 0; m < k; ++m) {
            double v = ta[m];
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) out[j] += v * tb.at(m, j);
        }
    } else {
        throw ShapeError("matmul: unsupported ranks " + ta.shape_str() + " x " +
                         tb.shape_str());
    }
    Value r = next();
    push(std::move(out), needs(a) || needs(b), [this, a, b, r]() {
        const Tensor& g = grad_ref(r);
        const Tensor& ta2 = val(a);
        const Tensor& tb2 = val(b);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        if (ta2.rank() == 2 && tb2.rank() == 2) {
            std::size_t rr = ta2.rows(), k = ta2.cols(), c = tb2.cols();
            for (std::size_t i = 0; i < rr; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    for (std::size_t m = 0; m < k; ++m) {
                        ga.at(i, m) += gv * tb2.at(m, j);
                        gb.at(m, j) += gv * ta2.at(i, m);
                    }
                }
        } else if (ta2.rank() == 2 && tb2.rank() == 1) {
            std::size_t rr = ta2.rows(), k = ta2.cols();
            for (std::size_t i = 0; i < rr; ++i) {
                double gv = g[i];
                if (gv == 0.0) continue;
                for (std::size_t m = 0; m < k; ++m) {
                    ga.at(i, m) += gv * tb2[m];
                    gb[m] += gv * ta2.at(i, m);
                }
            }
        } else {
            std::size_t k = tb2.rows(), c = tb2.cols();
            for (std::size_t m = 0; m < k; ++m)
                for (std::size_t j = 0; j < c; ++j) {
                    ga[m] += g[j] * tb2.at(m, j);
                    gb.at(m, j) += g[j] * ta2[m];
                }
        }
    });
    return r;
}

Value Tape::matmul_nt(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols()) {
        throw ShapeError("matmul_nt: " + ta.shape_str() + " x " + tb.shape_str() + "^T");
    }
    std::size_t r = ta.rows(), k = ta.cols(), c = tb.rows();
    Tensor out = Tensor::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t m = 0; m < k; ++m) acc += ta.at(i, m) * tb.at(j, m);
            out.at(i, j) = acc;
        }
    Value res = next();
    push(std::move(out), needs(a) || needs(b), [this, a, b, res]() {
        const Tensor& g = grad_ref(res);
        const Tensor& ta2 = val(a);
        const Tensor& tb2 = val(b);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        std::size_t r2 = ta2.rows(), k = ta2.cols(), c = tb2.rows();
        for (std::size_t i = 0; i < r2; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double gv = g.at(i, j);
                if (gv == 0.0) continue;
                for (std::size_t m = 0; m < k; ++m) {
                    ga.at(i, m) += gv * tb2.at(j, m);
                    gb.at(j, m) += gv * ta2.at(i, m);
                }
            }
    });
    return res;
}

Value Tape::sigmoid(Value a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Value r = next();
    push(std::move(out), needs(a), [this, a, r]() {
        const Tensor& g = grad_ref(r);
        const Tensor& o = val(r);
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * o[i] * (1.0 - o[i]);
    });
    return r;
}

Value Tape::relu(Value a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        // NaN passes through instead of flushing to zero, so bad values
        // stay visible downstream
        if (out[i] <= 0.0) out[i] = 0.0;
    }
    Value r = next();
    push(std::move(out), needs(a), [this, a, r]() {
        const Tensor& g = grad_ref(r);
        const Tensor& in = val(a);
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (in[i] > 0.0) ga[i] += g[i];
        }
    });
    return r;
}

Value Tape::tanh(Value a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    Value r = next();
    push(std::move(out), needs(a), [this, a, r]() {
        const Tensor& g = grad_ref(r);
        const Tensor& o = val(r);
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - o[i] * o[i]);
    });
    return r;
}

Value Tape::concat(Value a, Value b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 1 || tb.rank() != 1) {
        throw ShapeError("concat: rank-1 expected, got " + ta.shape_str() + " and " +
                         tb.shape_str());
    }
    std::vector<double> v;
    v.reserve(ta.numel() + tb.numel());
    v.insert(v.end(), ta.data().begin(), ta.data().end());
    v.insert(v.end(), tb.data().begin(), tb.data().end());
    std::size_t na = ta.numel();
    Value r = next();
    push(Tensor::vector(std::move(v)), needs(a) || needs(b), [this, a, b, r, na]() {
        const Tensor& g = grad_ref(r);
        Tensor& ga = grad_ref(a);
        Tensor& gb = grad_ref(b);
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        for (std::size_t i = na; i < g.numel(); ++i) gb[i - na] += g[i];
    });
    return r;
}

Value Tape::mean_pool(Value a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 2) throw ShapeError("mean_pool: rank-2 expected, got " + ta.shape_str());
    std::size_t r = ta.rows(), c = ta.cols();
    Tensor out = Tensor::zeros({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += ta.at(i, j);
    for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(r);
    Value res = next();
    push(std::move(out), needs(a), [this, a, res, r, c]() {
        const Tensor& g = grad_ref(res);
        Tensor& ga = grad_ref(a);
        double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g[j] * inv;
    });
    return res;
}

Value Tape::embedding_lookup(Value table, const BitVec& multihot) {
    const Tensor& t = val(table);
    if (t.rank() != 2 || t.rows() != multihot.size()) {
        throw ShapeError("embedding_lookup: table " + t.shape_str() + " vs multihot [" +
                         std::to_string(multihot.size()) + "]");
    }
    std::size_t d = t.cols();
    Tensor out = Tensor::zeros({d});
    std::vector<std::uint32_t> selected;
    for (std::size_t i = 0; i < multihot.size(); ++i) {
        if (!multihot[i]) continue;
        selected.push_back(static_cast<std::uint32_t>(i));
        for (std::size_t j = 0; j < d; ++j) out[j] += t.at(i, j);
    }
    Value r = next();
    push(std::move(out), needs(table),
             [this, table, r, d, selected = std::move(selected)]() {
                 const Tensor& g = grad_ref(r);
                 Tensor& gt = grad_ref(table);
                 for (std::uint32_t i : selected)
                     for (std::size_t j = 0; j < d; ++j) gt.at(i, j) += g[j];
             });
    return r;
}

Value Tape::rows_lookup(Value table, const std::vector<std::uint32_t>& rows) {
    const Tensor& t = val(table);
    if (t.rank() != 2) throw ShapeError("rows_lookup: table " + t.shape_str());
    std::size_t d = t.cols();
    Tensor out = Tensor::zeros({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= t.rows()) {
            throw ShapeError("rows_lookup: row " + std::to_string(rows[r]) +
                             " out of table " + t.shape_str());
        }
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = t.at(rows[r], j);
    }
    Value res = next();
    push(std::move(out), needs(table), [this, table, res, d, rows]() {
        const Tensor& g = grad_ref(res);
        Tensor& gt = grad_ref(table);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) gt.at(rows[r], j) += g.at(r, j);
    });
    return res;
}

Value Tape::stack_rows(const std::vector<Value>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    std::size_t d = val(rows[0]).numel();
    bool any_grad = false;
    Tensor out = Tensor::zeros({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor& t = val(rows[r]);
        if (t.rank() != 1 || t.numel() != d) {
            throw ShapeError("stack_rows: row " + std::to_string(r) + " has shape " +
                             t.shape_str());
        }
        any_grad = any_grad || needs(rows[r]);
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = t[j];
    }
    Value res = next();
    push(std::move(out), any_grad, [this, res, d, rows]() {
        const Tensor& g = grad_ref(res);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Tensor& gr = grad_ref(rows[r]);
            for (std::size_t j = 0; j < d; ++j) gr[j] += g.at(r, j);
        }
    });
    return res;
}

Value Tape::masked_linear(Value x, Value w, const ByteMatrix* mask) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tx.rank() != 1 || tw.rank() != 2 || tw.rows() != tx.numel() ||
        tw.rows() != mask->rows || tw.cols() != mask->cols) {
        throw ShapeError("masked_linear: x " + tx.shape_str() + ", W " + tw.shape_str() +
                         ", mask [" + std::to_string(mask->rows) + ", " +
                         std::to_string(mask->cols) + "]");
    }
    std::size_t s = tw.rows(), m = tw.cols();
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < s; ++i) {
        double xv = tx[i];
        if (xv == 0.0) continue;
        const std::uint8_t* mrow = mask->data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            if (mrow[j]) out[j] += xv * tw.at(i, j);
        }
    }
    Value r = next();
    push(std::move(out), needs(x) || needs(w), [this, x, w, mask, r, s, m]() {
        const Tensor& g = grad_ref(r);
        const Tensor& tx2 = val(x);
        const Tensor& tw2 = val(w);
        Tensor& gx = grad_ref(x);
        Tensor& gw = grad_ref(w);
        for (std::size_t i = 0; i < s; ++i) {
            const std::uint8_t* mrow = mask->data.data() + i * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (!mrow[j]) continue; // masked entries never receive gradient
                acc += g[j] * tw2.at(i, j);
                gw.at(i, j) += tx2[i] * g[j];
            }
            gx[i] += acc;
        }
    });
    return r;
}

Value Tape::layer_norm(Value x, Value gain, Value bias) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gain);
    const Tensor& tb = val(bias);
    require_same_shape(tx, tg, "layer_norm gain");
    require_same_shape(tx, tb, "layer_norm bias");
    std::size_t n = tx.numel();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += tx[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = tx[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) out[i] = (tx[i] - mean) * inv_std * tg[i] + tb[i];
    Value r = next();
    push(std::move(out), needs(x) || needs(gain) || needs(bias),
             [this, x, gain, bias, r, n, mean, inv_std]() {
                 const Tensor& g = grad_ref(r);
                 const Tensor& tx2 = val(x);
                 const Tensor& tg2 = val(gain);
                 Tensor& gx = grad_ref(x);
                 Tensor& gg = grad_ref(gain);
                 Tensor& gb = grad_ref(bias);
                 double inv_n = 1.0 / static_cast<double>(n);
                 // dxhat, plus the two mean corrections from mu and sigma.
                 double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                 std::vector<double> xhat(n), dxhat(n);
                 for (std::size_t i = 0; i < n; ++i) {
                     xhat[i] = (tx2[i] - mean) * inv_std;
                     dxhat[i] = g[i] * tg2[i];
                     gg[i] += g[i] * xhat[i];
                     gb[i] += g[i];
                     sum_dxhat += dxhat[i];
                     sum_dxhat_xhat += dxhat[i] * xhat[i];
                 }
                 for (std::size_t i = 0; i < n; ++i) {
                     gx[i] += inv_std * (dxhat[i] - inv_n * sum_dxhat -
                                         xhat[i] * inv_n * sum_dxhat_xhat);
                 }
             });
    return r;
}

Value Tape::dropout(Value x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ValueError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    }
    if (!training || rate == 0.0) {
        // identity node keeps graph structure stable between modes
        Tensor out = val(x);
        Value r = next();
        push(std::move(out), needs(x), [this, x, r]() {
            const Tensor& g = grad_ref(r);
            Tensor& gx = grad_ref(x);
            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        });
        return r;
    }
    const Tensor& tx = val(x);
    double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(tx.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    Tensor out = tx;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    Value r = next();
    push(std::move(out), needs(x), [this, x, r, mask = std::move(mask)]() {
        const Tensor& g = grad_ref(r);
        Tensor& gx = grad_ref(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
    });
    return r;
}

Value Tape::neighbor_message_sum(Value left, Value right, Value bias,
                                 const NeighborLists* adj) {
    const Tensor& tl = val(left);
    const Tensor& tr = val(right);
    const Tensor& tb = val(bias);
    if (tl.rank() != 2 || !tl.same_shape(tr) || tb.numel() != tl.cols() ||
        adj->size() != tl.rows()) {
        throw ShapeError("neighbor_message_sum: left " + tl.shape_str() + ", right " +
                         tr.shape_str() + ", bias " + tb.shape_str());
    }
    std::size_t n = tl.rows(), d = tl.cols();
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* li = tl.data().data() + i * d;
        double* oi = out.data().data() + i * d;
        for (std::uint32_t j : (*adj)[i]) {
            const double* rj = tr.data().data() + j * d;
            for (std::size_t k = 0; k < d; ++k) {
                double t = li[k] + rj[k] + tb[k];
                if (t > 0.0) oi[k] += t;
            }
        }
    }
    Value res = next();
    push(std::move(out), needs(left) || needs(right) || needs(bias),
               [this, left, right, bias, adj, res, n, d]() {
                   const Tensor& g = grad_ref(res);
                   const Tensor& tl2 = val(left);
                   const Tensor& tr2 = val(right);
                   const Tensor& tb2 = val(bias);
                   Tensor& gl = grad_ref(left);
                   Tensor& gr = grad_ref(right);
                   Tensor& gb = grad_ref(bias);
                   for (std::size_t i = 0; i < n; ++i) {
                       const double* li = tl2.data().data() + i * d;
                       const double* gi = g.data().data() + i * d;
                       double* gli = gl.data().data() + i * d;
                       for (std::uint32_t j : (*adj)[i]) {
                           const double* rj = tr2.data().data() + j * d;
                           double* grj = gr.data().data() + j * d;
                           for (std::size_t k = 0; k < d; ++k) {
                               if (li[k] + rj[k] + tb2[k] > 0.0) {
                                   gli[k] += gi[k];
                                   grj[k] += gi[k];
                                   gb[k] += gi[k];
                               }
                           }
                       }
                   }
               });
    return res;
}

Value Tape::bce_sum(Value scores, const BitVec& truth, bool clamp) {
    const Tensor& o = val(scores);
    if (o.rank() != 1 || o.numel() != truth.size()) {
        throw ShapeError("bce_sum: scores " + o.shape_str() + " vs truth [" +
                         std::to_string(truth.size()) + "]");
    }
    double loss = 0.0;
    std::vector<std::uint8_t> saturated(o.numel(), 0);
    for (std::size_t i = 0; i < o.numel(); ++i) {
        double p = o[i];
        if (p <= 0.0 || p >= 1.0) {
            if (!clamp) {
                throw ValueError("bce_sum: score " + std::to_string(p) +
                                 " outside (0, 1) at index " + std::to_string(i));
            }
            p = p < kBceClamp ? kBceClamp : (p > 1.0 - kBceClamp ? 1.0 - kBceClamp : p);
            saturated[i] = 1;
        }
        loss -= truth[i] ? std::log(p) : std::log(1.0 - p);
    }
    Value r = next();
    push(Tensor::scalar(loss), needs(scores),
             [this, scores, r, truth, saturated = std::move(saturated)]() {
                 double g = grad_ref(r)[0];
                 const Tensor& o2 = val(scores);
                 Tensor& go = grad_ref(scores);
                 for (std::size_t i = 0; i < o2.numel(); ++i) {
                     if (saturated[i]) continue; // clamped region: locally constant
                     go[i] += g * (truth[i] ? -1.0 / o2[i] : 1.0 / (1.0 - o2[i]));
                 }
             });
    return r;
}

Value Tape::hinge_pairs(Value scores, const BitVec& truth) {
    const Tensor& o = val(scores);
    if (o.rank() != 1 || o.numel() != truth.size()) {
        throw ShapeError("hinge_pairs: scores " + o.shape_str() + " vs truth [" +
                         std::to_string(truth.size()) + "]");
    }
    std::size_t m = o.numel();
    double inv_m = 1.0 / static_cast<double>(m);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!truth[i]) continue;
        for (std::size_t j = 0; j < m; ++j) {
            if (truth[j]) continue;
            double v = 1.0 - (o[i] - o[j]);
            if (v > 0.0) loss += v * inv_m;
        }
    }
    Value r = next();
    push(Tensor::scalar(loss), needs(scores), [this, scores, r, truth, inv_m]() {
        double g = grad_ref(r)[0];
        const Tensor& o2 = val(scores);
        Tensor& go = grad_ref(scores);
        std::size_t m2 = o2.numel();
        for (std::size_t i = 0; i < m2; ++i) {
            if (!truth[i]) continue;
            for (std::size_t j = 0; j < m2; ++j) {
                if (truth[j]) continue;
                if (1.0 - (o2[i] - o2[j]) > 0.0) {
                    go[i] -= g * inv_m;
                    go[j] += g * inv_m;
                }
            }
        }
    });
    return r;
}

Value Tape::quadratic_interaction(Value scores, const ByteMatrix* interactions) {
    const Tensor& o = val(scores);
    if (o.rank() != 1 || interactions->rows != o.numel() ||
        interactions->cols != o.numel()) {
        throw ShapeError("quadratic_interaction: scores " + o.shape_str() + " vs matrix [" +
                         std::to_string(interactions->rows) + ", " +
                         std::to_string(interactions->cols) + "]");
    }
    std::size_t m = o.numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::uint8_t* row = interactions->data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            if (row[j]) loss += o[i] * o[j];
        }
    }
    Value r = next();
    push(Tensor::scalar(loss), needs(scores), [this, scores, r, interactions, m]() {
        double g = grad_ref(r)[0];
        const Tensor& o2 = val(scores);
        Tensor& go = grad_ref(scores);
        for (std::size_t i = 0; i < m; ++i) {
            const std::uint8_t* row = interactions->data.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) {
                if (!row[j]) continue;
                go[i] += g * o2[j];
                go[j] += g * o2[i];
            }
        }
    });
    return r;
}

Value Tape::mean_of(const std::vector<Value>& scalars) {
    if (scalars.empty()) throw ShapeError("mean_of: no values");
    Value acc = scalars[0];
    for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
    return scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

void Tape::backward(Value target) {
    const Tensor& t = val(target);
    if (t.numel() != 1) {
        throw ShapeError("backward: target must be scalar, got " + t.shape_str());
    }
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.out.shape());
    nodes_[target.id].grad[0] = 1.0;
    ran_backward_ = true;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.back) continue;
        if (check_finite_ && !n.grad.finite()) {
            throw NonFiniteError("backward: non-finite gradient at node " +
                                 std::to_string(i));
        }
        n.back();
    }
    if (check_finite_) {
        for (const Node& n : nodes_) {
            if (n.needs_grad && !n.grad.finite()) {
                throw NonFiniteError("backward: non-finite accumulated gradient");
            }
        }
    }
}

Value gru_cell(Tape& tape, Value x, Value h_prev, const GruParamRefs& p) {
    Value z = tape.sigmoid(tape.add(
        tape.add(tape.matmul(p.w_update, x), tape.matmul(p.u_update, h_prev)),
        p.b_update));
    Value r = tape.sigmoid(tape.add(
        tape.add(tape.matmul(p.w_reset, x), tape.matmul(p.u_reset, h_prev)), p.b_reset));
    Value cand = tape.tanh(tape.add(
        tape.add(tape.matmul(p.w_cand, x), tape.matmul(p.u_cand, tape.mul(r, h_prev))),
        p.b_cand));
    Value ones = tape.constant(Tensor::full(tape.val(z).shape(), 1.0));
    return tape.add(tape.mul(tape.sub(ones, z), h_prev), tape.mul(z, cand));
}

} // namespace ad
} // namespace drugrec
