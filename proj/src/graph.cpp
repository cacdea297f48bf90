#include "ltsmdiff/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "ltsmdiff/kernels.hpp"

namespace ltsm::ad {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

Mat colsum(const Mat& g) {
    Mat out(1, g.cols());
    for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) out(0, j) += g(i, j);
    return out;
}

}  // namespace

Var Graph::make(Mat value, bool needs_grad, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && grad_enabled_;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::gbuf(int idx) {
    Mat& g = grads_[idx];
    if (g.empty()) g = Mat(nodes_[idx].value.rows(), nodes_[idx].value.cols());
    return g;
}

void Graph::accum(int idx, const Mat& g) {
    if (idx < 0 || !nodes_[idx].needs_grad) return;
    gbuf(idx) += g;
}

double Graph::scalar(Var v) const {
    const Mat& m = value(v);
    if (m.size() != 1) throw std::logic_error("Graph::scalar: node is not 1x1");
    return m[0];
}

Var Graph::input(Mat v) { return make(std::move(v), false, nullptr); }

Var Graph::param(Parameter& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second};
    Var v = make(p.value, grad_enabled_ && p.trainable, nullptr);
    param_cache_[&p] = v.idx;
    if (grad_enabled_ && p.trainable) bindings_.emplace_back(v.idx, &p);
    return v;
}

Var Graph::add(Var a, Var b) {
    Mat out = value(a) + value(b);
    int ia = a.idx, ib = b.idx;
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            g.accum(ia, go);
            g.accum(ib, go);
        };
    }
    return r;
}

Var Graph::sub(Var a, Var b) {
    Mat out = value(a) - value(b);
    int ia = a.idx, ib = b.idx;
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            g.accum(ia, go);
            g.accum(ib, go * -1.0);
        };
    }
    return r;
}

Var Graph::hadamard(Var a, Var b) {
    Mat out = ltsm::hadamard(value(a), value(b));
    int ia = a.idx, ib = b.idx;
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            g.accum(ia, ltsm::hadamard(go, g.nodes_[ib].value));
            g.accum(ib, ltsm::hadamard(go, g.nodes_[ia].value));
        };
    }
    return r;
}

Var Graph::scale(Var a, double c) {
    Mat out = value(a) * c;
    int ia = a.idx;
    Var r = make(std::move(out), needs(a), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ir, c](Graph& g) { g.accum(ia, g.grads_[ir] * c); };
    }
    return r;
}

Var Graph::matmul(Var a, Var b) {
    Mat out = kernels::matmul(value(a), value(b));
    int ia = a.idx, ib = b.idx;
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            if (g.nodes_[ia].needs_grad) g.accum(ia, kernels::matmul_nt(go, g.nodes_[ib].value));
            if (g.nodes_[ib].needs_grad) g.accum(ib, kernels::matmul_tn(g.nodes_[ia].value, go));
        };
    }
    return r;
}

Var Graph::matmul_nt(Var a, Var b) {
    Mat out = kernels::matmul_nt(value(a), value(b));
    int ia = a.idx, ib = b.idx;
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            if (g.nodes_[ia].needs_grad) g.accum(ia, kernels::matmul(go, g.nodes_[ib].value));
            if (g.nodes_[ib].needs_grad) g.accum(ib, kernels::matmul_tn(go, g.nodes_[ia].value));
        };
    }
    return r;
}

Var Graph::add_rowvec(Var x, Var bias) {
    const Mat& xv = value(x);
    const Mat& bv = value(bias);
    if (bv.rows() != 1 || bv.cols() != xv.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1x" + std::to_string(xv.cols()));
    Mat out = xv;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
    int ix = x.idx, ib = bias.idx;
    Var r = make(std::move(out), needs(x) || needs(bias), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ib, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            g.accum(ix, go);
            if (g.nodes_[ib].needs_grad) g.accum(ib, colsum(go));
        };
    }
    return r;
}

Var Graph::linear(Var x, Var w, Var bias) {
    Var y = matmul_nt(x, w);
    return bias.valid() ? add_rowvec(y, bias) : y;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Mat& xv = value(x);
    const int rows = xv.rows(), n = xv.cols();
    Mat xhat(rows, n);
    Mat inv_std(rows, 1);
    for (int i = 0; i < rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xv(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xv(i, j) - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(i, 0) = is;
        for (int j = 0; j < n; ++j) xhat(i, j) = (xv(i, j) - mu) * is;
    }
    const Mat& gv = value(gamma);
    const Mat& bv = value(beta);
    if (gv.cols() != n || bv.cols() != n)
        throw std::invalid_argument("layer_norm: gamma/beta must be 1x" + std::to_string(n));
    Mat out(rows, n);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = gv(0, j) * xhat(i, j) + bv(0, j);

    int ix = x.idx, ig = gamma.idx, ib = beta.idx;
    Var r = make(std::move(out), needs(x) || needs(gamma) || needs(beta), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ig, ib, ir, xhat, inv_std](Graph& g) {
            const Mat& go = g.grads_[ir];
            const Mat& gam = g.nodes_[ig].value;
            const int rr = go.rows(), nn = go.cols();
            if (g.nodes_[ig].needs_grad) g.accum(ig, colsum(ltsm::hadamard(go, xhat)));
            if (g.nodes_[ib].needs_grad) g.accum(ib, colsum(go));
            if (g.nodes_[ix].needs_grad) {
                Mat dx(rr, nn);
                for (int i = 0; i < rr; ++i) {
                    double mean_h = 0.0, mean_hx = 0.0;
                    for (int j = 0; j < nn; ++j) {
                        const double h = go(i, j) * gam(0, j);
                        mean_h += h;
                        mean_hx += h * xhat(i, j);
                    }
                    mean_h /= nn;
                    mean_hx /= nn;
                    for (int j = 0; j < nn; ++j) {
                        const double h = go(i, j) * gam(0, j);
                        dx(i, j) = inv_std(i, 0) * (h - mean_h - xhat(i, j) * mean_hx);
                    }
                }
                g.accum(ix, dx);
            }
        };
    }
    return r;
}

Var Graph::softmax_rows(Var x) {
    const Mat& xv = value(x);
    Mat p(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i) {
        double mx = xv(i, 0);
        for (int j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv(i, j));
        double s = 0.0;
        for (int j = 0; j < xv.cols(); ++j) {
            p(i, j) = std::exp(xv(i, j) - mx);
            s += p(i, j);
        }
        for (int j = 0; j < xv.cols(); ++j) p(i, j) /= s;
    }
    int ix = x.idx;
    Var r = make(std::move(p), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            const Mat& pv = g.nodes_[ir].value;
            Mat dx(go.rows(), go.cols());
            for (int i = 0; i < go.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < go.cols(); ++j) dot += go(i, j) * pv(i, j);
                for (int j = 0; j < go.cols(); ++j) dx(i, j) = pv(i, j) * (go(i, j) - dot);
            }
            g.accum(ix, dx);
        };
    }
    return r;
}

Var Graph::gelu(Var x) {
    const Mat& xv = value(x);
    Mat out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        out[i] = 0.5 * v * (1.0 + t);
    }
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            const Mat& xin = g.nodes_[ix].value;
            Mat dx(go.rows(), go.cols());
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double v = xin[i];
                const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
                const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                dx[i] = go[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner);
            }
            g.accum(ix, dx);
        };
    }
    return r;
}

Var Graph::dropout(Var x, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Mat& xv = value(x);
    Mat mask(xv.rows(), xv.cols());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = (rng.uniform() >= p) ? keep_scale : 0.0;
    Mat out = ltsm::hadamard(xv, mask);
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir, mask](Graph& g) {
            g.accum(ix, ltsm::hadamard(g.grads_[ir], mask));
        };
    }
    return r;
}

Var Graph::slice_rows(Var x, int r0, int r1) {
    const Mat& xv = value(x);
    if (r0 < 0 || r1 > xv.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    Mat out(r1 - r0, xv.cols());
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < xv.cols(); ++j) out(i - r0, j) = xv(i, j);
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir, r0](Graph& g) {
            const Mat& go = g.grads_[ir];
            Mat& gx = g.gbuf(ix);
            for (int i = 0; i < go.rows(); ++i)
                for (int j = 0; j < go.cols(); ++j) gx(i + r0, j) += go(i, j);
        };
    }
    return r;
}

Var Graph::slice_cols(Var x, int c0, int c1) {
    const Mat& xv = value(x);
    if (c0 < 0 || c1 > xv.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range");
    Mat out(xv.rows(), c1 - c0);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = c0; j < c1; ++j) out(i, j - c0) = xv(i, j);
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir, c0](Graph& g) {
            const Mat& go = g.grads_[ir];
            Mat& gx = g.gbuf(ix);
            for (int i = 0; i < go.rows(); ++i)
                for (int j = 0; j < go.cols(); ++j) gx(i, j + c0) += go(i, j);
        };
    }
    return r;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int rows = 0;
    const int cols = value(parts[0]).cols();
    bool ng = false;
    for (Var p : parts) {
        if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += value(p).rows();
        ng = ng || needs(p);
    }
    Mat out(rows, cols);
    std::vector<int> offsets;
    std::vector<int> idxs;
    int at = 0;
    for (Var p : parts) {
        const Mat& pv = value(p);
        offsets.push_back(at);
        idxs.push_back(p.idx);
        for (int i = 0; i < pv.rows(); ++i)
            for (int j = 0; j < cols; ++j) out(at + i, j) = pv(i, j);
        at += pv.rows();
    }
    Var r = make(std::move(out), ng, nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [idxs, offsets, ir](Graph& g) {
            const Mat& go = g.grads_[ir];
            for (std::size_t k = 0; k < idxs.size(); ++k) {
                const int idx = idxs[k];
                if (!g.nodes_[idx].needs_grad) continue;
                Mat& gx = g.gbuf(idx);
                const int off = offsets[k];
                for (int i = 0; i < gx.rows(); ++i)
                    for (int j = 0; j < gx.cols(); ++j) gx(i, j) += go(off + i, j);
            }
        };
    }
    return r;
}

Var Graph::concat_cols(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    Mat out(av.rows(), av.cols() + bv.cols());
    for (int i = 0; i < av.rows(); ++i) {
        for (int j = 0; j < av.cols(); ++j) out(i, j) = av(i, j);
        for (int j = 0; j < bv.cols(); ++j) out(i, av.cols() + j) = bv(i, j);
    }
    int ia = a.idx, ib = b.idx;
    const int split = av.cols();
    Var r = make(std::move(out), needs(a) || needs(b), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ia, ib, ir, split](Graph& g) {
            const Mat& go = g.grads_[ir];
            if (g.nodes_[ia].needs_grad) {
                Mat& ga = g.gbuf(ia);
                for (int i = 0; i < ga.rows(); ++i)
                    for (int j = 0; j < split; ++j) ga(i, j) += go(i, j);
            }
            if (g.nodes_[ib].needs_grad) {
                Mat& gb = g.gbuf(ib);
                for (int i = 0; i < gb.rows(); ++i)
                    for (int j = 0; j < gb.cols(); ++j) gb(i, j) += go(i, split + j);
            }
        };
    }
    return r;
}

Var Graph::reshape(Var x, int rows, int cols) {
    Mat out = value(x).reshaped(rows, cols);
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir](Graph& g) {
            const Mat& xin = g.nodes_[ix].value;
            g.accum(ix, g.grads_[ir].reshaped(xin.rows(), xin.cols()));
        };
    }
    return r;
}

Var Graph::sum(Var x) {
    Mat out(1, 1);
    out[0] = sum_all(value(x));
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir](Graph& g) {
            const double go = g.grads_[ir][0];
            const Mat& xin = g.nodes_[ix].value;
            Mat dx(xin.rows(), xin.cols(), go);
            g.accum(ix, dx);
        };
    }
    return r;
}

Var Graph::sum_sq(Var x) {
    Mat out(1, 1);
    out[0] = ltsm::sq_norm(value(x));
    int ix = x.idx;
    Var r = make(std::move(out), needs(x), nullptr);
    if (nodes_[r.idx].needs_grad) {
        int ir = r.idx;
        nodes_[r.idx].back = [ix, ir](Graph& g) {
            const double go = g.grads_[ir][0];
            g.accum(ix, g.nodes_[ix].value * (2.0 * go));
        };
    }
    return r;
}

void Graph::check_finite(Var v, const std::string& what) const {
    if (!all_finite(value(v)))
        throw std::runtime_error("non-finite values in " + what);
}

void Graph::backward(Var loss) {
    if (!grad_enabled_) throw std::logic_error("backward on a grad-disabled graph");
    if (value(loss).size() != 1) throw std::logic_error("backward: loss must be 1x1");
    gbuf(loss.idx)[0] += 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        if (!grads_[i].empty() && nodes_[i].back) nodes_[i].back(*this);
    }
    for (auto& [idx, p] : bindings_) {
        if (!grads_[idx].empty()) {
            p->ensure_grad();
            p->grad += grads_[idx];
        }
    }
    // A second backward on the same graph would double-count; reset bindings.
    bindings_.clear();
}

}  // namespace ltsm::ad
