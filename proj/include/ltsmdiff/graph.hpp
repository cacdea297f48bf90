#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltsmdiff/mat.hpp"
#include "ltsmdiff/rng.hpp"

namespace ltsm {

/// A named weight tensor. `trainable = false` marks frozen tensors: the
/// graph never routes gradients into them and the optimizer never touches
/// them, so they stay bitwise constant through training.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Mat v, bool train = true)
        : name(std::move(n)), value(std::move(v)), trainable(train) {}

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Mat(value.rows(), value.cols());
    }
    void zero_grad() {
        ensure_grad();
        grad.set_zero();
    }
};

namespace ad {

/// Handle to a node in a Graph.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

/// Eager reverse-mode tape over Mat values. Build one Graph per forward
/// pass (or per training example); ops compute their value immediately and
/// record a backward closure. backward() accumulates d(loss)/d(param) into
/// each bound trainable Parameter's grad buffer.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(Mat v);
    Var param(Parameter& p);

    const Mat& value(Var v) const { return nodes_[v.idx].value; }
    double scalar(Var v) const;
    /// Gradient at a node after backward(); empty Mat if none reached it.
    const Mat& grad_at(Var v) const { return grads_[v.idx]; }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double c);
    Var matmul(Var a, Var b);     // A·B
    Var matmul_nt(Var a, Var b);  // A·Bᵀ
    Var add_rowvec(Var x, Var bias);
    /// y = x·Wᵀ (+ bias); W laid out d_out×d_in, tokens as rows of x.
    Var linear(Var x, Var w, Var bias = {});
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var softmax_rows(Var x);
    Var gelu(Var x);
    Var dropout(Var x, double p, Rng& rng, bool training);
    Var slice_rows(Var x, int r0, int r1);
    Var slice_cols(Var x, int c0, int c1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(Var a, Var b);
    Var reshape(Var x, int rows, int cols);
    Var sum(Var x);     // 1×1
    Var sum_sq(Var x);  // 1×1
    /// Element-mean of squares: sum_sq / numel.
    Var mean_sq(Var x) { return scale(sum_sq(x), 1.0 / static_cast<double>(value(x).size())); }

    void check_finite(Var v, const std::string& what) const;

    /// Runs reverse accumulation from a 1×1 loss node, then adds node
    /// gradients of bound trainable parameters into Parameter::grad.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        Mat value;
        std::function<void(Graph&)> back;
        bool needs_grad = false;
    };

    Var make(Mat value, bool needs_grad, std::function<void(Graph&)> back);
    bool needs(Var v) const { return v.valid() && nodes_[v.idx].needs_grad; }
    Mat& gbuf(int idx);
    void accum(int idx, const Mat& g);

    bool grad_enabled_;
    // Deques keep references from value()/grad_at() stable as the tape grows.
    std::deque<Node> nodes_;
    std::deque<Mat> grads_;
    std::vector<std::pair<int, Parameter*>> bindings_;
    std::unordered_map<const Parameter*, int> param_cache_;
};

}  // namespace ad
}  // namespace ltsm
