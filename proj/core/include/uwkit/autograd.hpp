#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "uwkit/tensor.hpp"

namespace uwkit::ag {

// Reverse-mode autodiff over Tensor values. Each op builds a Node whose
// backward closure scatters the node's gradient into its parents. Graphs
// are per-forward-pass and freed when the last Var goes out of scope.
//
// Determinism: every reduction runs in a fixed loop order and backward
// visits nodes in reverse creation order, so repeated runs produce
// bit-identical gradients.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use during backward
    bool requires_grad = false;
    int64_t id = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    bool has_grad_buffer() const { return grad.numel() == value.numel() && grad.numel() > 0; }
    Tensor& ensure_grad() {
        if (!has_grad_buffer()) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

// Leaf without gradient (inputs, targets, fixed encodings).
Var constant(Tensor value);
// Leaf with gradient (parameters).
Var leaf(Tensor value, bool requires_grad);

// Runs backward from a scalar root (shape {1}); accumulates into
// `grad` of every reachable node with requires_grad.
void backward(const Var& root);

// ---- arithmetic -----------------------------------------------------------
Var add(const Var& a, const Var& b);        // same shape
Var sub(const Var& a, const Var& b);        // same shape
Var mul(const Var& a, const Var& b);        // elementwise, same shape
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sum_list(const std::vector<Var>& xs);   // same-shape accumulation

// ---- linear algebra -------------------------------------------------------
Var matmul(const Var& a, const Var& b);                     // [m,k]x[k,n]
Var linear(const Var& x, const Var& w, const Var& b);       // x[m,k], w[n,k], b[n] or null
Var transpose(const Var& a);                                // 2-D

// ---- activations ----------------------------------------------------------
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);

// ---- normalization / attention helpers ------------------------------------
Var softmax_rows(const Var& x);                                   // 2-D, per row
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// ---- shape ops --------------------------------------------------------------
Var reshape(const Var& a, std::vector<int64_t> shape);
Var slice_cols(const Var& x, int64_t c0, int64_t len);            // 2-D
Var slice_rows(const Var& x, int64_t r0, int64_t len);            // 2-D
Var concat_cols(const std::vector<Var>& xs);                      // 2-D
Var concat_rows(const std::vector<Var>& xs);                      // 2-D
Var gather_rows(const Var& x, const std::vector<int>& idx);       // 2-D
Var row_zero(const Var& x, const std::vector<uint8_t>& zero_row); // 2-D mask fill

// ---- reductions / losses ----------------------------------------------------
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse_loss(const Var& a, const Var& b);                          // mean over elements
Var softmax_ce_loss(const Var& logits, const std::vector<int>& labels);  // mean over rows
Var bce_with_logits_loss(const Var& logits, const Tensor& targets);      // mean over elements
Var smooth_l1_loss(const Var& pred, const Tensor& target, double beta);  // mean over elements

// ---- conv / spatial ---------------------------------------------------------
// Feature maps are [h, w, c]; conv weights [kh, kw, cin, cout].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Transposed conv with kernel 2, stride 2 (exact 2x upsampling).
// Weights [2, 2, cin, cout].
Var conv_transpose2x(const Var& x, const Var& w, const Var& b);
Var upsample_bilinear(const Var& x, int out_h, int out_w);
Var global_max_pool(const Var& x);   // [h,w,c] -> [c]
Var global_avg_pool(const Var& x);   // [h,w,c] -> [c]
Var channel_scale(const Var& x, const Var& g);  // x[h,w,c] * g[c]

// RoIAlign over [h,w,c] in image-pixel box coordinates.
// boxes: {x1,y1,x2,y2} per row (n x 4), spatial_scale maps image coords to
// feature coords. Output [n, out, out, c]. Bilinear samples per bin axis:
// ceil(bin size in feature pixels) capped at 2, averaged (so a bin covering
// one feature pixel reads its exact center and a same-size full-image box is
// the identity). Degenerate boxes collapse to a single corner sample.
Var roi_align(const Var& x, const Tensor& boxes, double spatial_scale, int out_size);

// ---- graph attention composite ---------------------------------------------
// For node i with neighbors N(i): logits z_ij = leaky_relu(si[i] + sj[j]),
// a_ij = softmax_j(z_ij), out_i = sum_j a_ij * u[j]. u:[n,c], si,sj:[n,1].
Var gat_aggregate(const Var& u, const Var& si, const Var& sj,
                  const std::vector<std::vector<int>>& neighbors, double slope);

// Convenience: scalar value of a {1} tensor.
double scalar_value(const Var& v);

}  // namespace uwkit::ag
