#pragma once

#include <vector>

#include "vary/tensor.hpp"

// Raw numeric kernels. Every loop runs in a fixed order so results are
// bit-reproducible across runs and thread counts; parallel sections
// partition disjoint output rows only.
namespace vary::kern {

// Polynomial exp (Cephes form, ~2 ulp) and a tanh built on it. About 4x
// faster than libm and fully deterministic; softmax, cross-entropy, and
// GELU go through these. Accuracy is pinned by a unit test against libm.
double fast_exp(double x);
double fast_tanh(double x);

// C = A[m,k] * B[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// C += A[m,k] * B[k,n]
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c);
// C = A[m,k] * B[n,k]^T
Tensor matmul_bt(const Tensor& a, const Tensor& b);
// C += A[k,m]^T * B[k,n]
void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& c);

void add_inplace(Tensor& a, const Tensor& b);
void add_rowvec_inplace(Tensor& a, const Tensor& bias);  // a[m,n] += bias[n] per row
Tensor add(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b

// tanh-approximation GELU
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
Tensor gelu(const Tensor& x);

struct LayerNormCache {
    std::vector<double> mean, rstd;
};
// y = (x - mean)/sqrt(var+eps) * gamma + beta over the last dim
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 LayerNormCache* cache = nullptr, double eps = 1e-5);
void layernorm_bwd(const Tensor& x, const Tensor& gamma, const LayerNormCache& cache,
                   const Tensor& dy, Tensor& dx, Tensor& dgamma, Tensor& dbeta,
                   double eps = 1e-5);

// 3x3 convolution, stride 2, padding 1: x [H,W,Ci] -> y [H/2,W/2,Co].
// w is [Co, Ci, 3, 3], b is [Co]. H and W must be even.
Tensor conv3x3s2(const Tensor& x, const Tensor& w, const Tensor& b);
void conv3x3s2_bwd(const Tensor& x, const Tensor& w, const Tensor& dy,
                   Tensor& dx, Tensor& dw, Tensor& db);

struct AttentionCache {
    Tensor q, k, v;      // [T, D]
    Tensor probs;        // [heads, T, T] softmax rows
    Tensor att;          // [T, D] output before the final projection
};
// Full multi-head self-attention including the four projections.
// x [T,D]; all weight matrices [D,D], biases [D]. causal limits each query
// row t to keys 0..t.
Tensor attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk,
                 const Tensor& bk, const Tensor& wv, const Tensor& bv, const Tensor& wo,
                 const Tensor& bo, int heads, bool causal, AttentionCache* cache = nullptr);
void attention_bwd(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                   const Tensor& wo, int heads, bool causal, const AttentionCache& cache,
                   const Tensor& dy, Tensor& dx, Tensor& dwq, Tensor& dbq, Tensor& dwk,
                   Tensor& dbk, Tensor& dwv, Tensor& dbv, Tensor& dwo, Tensor& dbo);

// One incremental attention row against cached keys/values; produces the same
// floating-point results as the corresponding row of the batch kernel.
// q_row is [dim]; k_cache/v_cache hold `rows` rows of `dim`, including the
// newest position. Returns the att row [dim] (pre output-projection).
std::vector<double> attention_row(const std::vector<double>& q_row, const double* k_cache,
                                  const double* v_cache, int rows, int dim, int heads);

// Mean cross-entropy over positions where next_id >= 0.
// logits [T, V]; next_id[t] is the target scored against logits row t.
// dlogits (optional) receives d(loss)/d(logits); rows with next_id < 0 stay 0.
double masked_cross_entropy(const Tensor& logits, const std::vector<int>& next_ids,
                            Tensor* dlogits = nullptr);

// Row-wise softmax in place (max-subtracted).
void softmax_rows(Tensor& x);

}  // namespace vary::kern
