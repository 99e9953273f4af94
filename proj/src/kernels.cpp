#include "vary/kernels.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vary::kern {

namespace {

void check_mat(const Tensor& t, const char* who) {
    if (t.ndim() < 1 || t.numel() == 0) throw ShapeError(std::string(who) + ": empty tensor");
}

// parallelize only when the work amortizes thread startup
constexpr size_t kParallelFlops = size_t(1) << 19;

inline double ldexp_fast(double v, int n) {
    // scale by 2^n for |n| small enough to stay normal (softmax/tanh range)
    if (n < -1021) {
        // drop to subnormal territory in two steps
        v *= 0x1p-512;
        n += 512;
        if (n < -1021) return 0.0;
    }
    uint64_t bits = static_cast<uint64_t>(1023 + n) << 52;
    double scale;
    std::memcpy(&scale, &bits, 8);
    return v * scale;
}

}  // namespace

double fast_exp(double x) {
    if (x > 709.0) return std::numeric_limits<double>::infinity();
    if (x < -708.0) return 0.0;
    constexpr double kLog2E = 1.4426950408889634073599;
    constexpr double kC1 = 6.93145751953125e-1;
    constexpr double kC2 = 1.42860682030941723212e-6;
    const double n = std::floor(kLog2E * x + 0.5);
    const int ni = static_cast<int>(n);
    x -= n * kC1;
    x -= n * kC2;
    const double xx = x * x;
    const double px =
        x * ((1.26177193074810590878e-4 * xx + 3.02994407707441961300e-2) * xx +
             9.99999999999999999910e-1);
    const double qx = ((3.00198505138664455042e-6 * xx + 2.52448340349684104192e-3) * xx +
                       2.27265548208155028766e-1) *
                          xx +
                      2.00000000000000000005e0;
    const double r = 1.0 + 2.0 * (px / (qx - px));
    return ldexp_fast(r, ni);
}

double fast_tanh(double x) {
    const double a = std::fabs(x);
    if (a > 20.0) return x > 0 ? 1.0 : -1.0;  // saturated to double precision
    const double e = fast_exp(2.0 * a);
    const double t = 1.0 - 2.0 / (e + 1.0);
    return x >= 0 ? t : -t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    matmul_acc(a, b, c);
    return c;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    check_mat(a, "matmul");
    check_mat(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw ShapeError("matmul: inner dims " + a.shape_str() + " x " + b.shape_str());
    if (c.rows() != m || c.cols() != n) throw ShapeError("matmul: bad output shape");
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    const size_t work = size_t(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
#endif
    for (int i = 0; i < m; ++i) {
        double* crow = C + size_t(i) * n;
        const double* arow = A + size_t(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = B + size_t(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    (void)work;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    check_mat(a, "matmul_bt");
    check_mat(b, "matmul_bt");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) throw ShapeError("matmul_bt: inner dims");
    Tensor c({m, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    const size_t work = size_t(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
#endif
    for (int i = 0; i < m; ++i) {
        const double* arow = A + size_t(i) * k;
        double* crow = C + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = B + size_t(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    (void)work;
    return c;
}

void matmul_at_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    check_mat(a, "matmul_at");
    check_mat(b, "matmul_at");
    const int k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) throw ShapeError("matmul_at: inner dims");
    if (c.rows() != m || c.cols() != n) throw ShapeError("matmul_at: bad output shape");
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    // dW[p,j] += sum_i A[i,p] * B[i,j]; serial over i keeps accumulation order fixed
    for (int i = 0; i < k; ++i) {
        const double* arow = A + size_t(i) * m;
        const double* brow = B + size_t(i) * n;
        for (int p = 0; p < m; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = C + size_t(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double* x = a.data();
    const double* y = b.data();
    for (size_t i = 0; i < a.numel(); ++i) x[i] += y[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    add_inplace(c, b);
    return c;
}

void add_rowvec_inplace(Tensor& a, const Tensor& bias) {
    const int n = a.cols();
    if (static_cast<int>(bias.numel()) != n) throw ShapeError("bias length mismatch");
    double* x = a.data();
    const double* bv = bias.data();
    const int m = a.rows();
    for (int i = 0; i < m; ++i) {
        double* row = x + size_t(i) * n;
        for (int j = 0; j < n; ++j) row[j] += bv[j];
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    add_rowvec_inplace(y, b);
    return y;
}

double gelu_scalar(double x) {
    const double c = 0.7978845608028653558798921198687;  // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + fast_tanh(u));
}

double gelu_grad_scalar(double x) {
    const double c = 0.7978845608028653558798921198687;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = fast_tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Tensor gelu(const Tensor& x) {
    Tensor y = x;
    double* d = y.data();
    for (size_t i = 0; i < y.numel(); ++i) d[i] = gelu_scalar(d[i]);
    return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 LayerNormCache* cache, double eps) {
    const int n = x.cols(), m = x.rows();
    if (static_cast<int>(gamma.numel()) != n || static_cast<int>(beta.numel()) != n)
        throw ShapeError("layernorm: gamma/beta length mismatch");
    Tensor y({m, n});
    if (cache) {
        cache->mean.assign(m, 0.0);
        cache->rstd.assign(m, 0.0);
    }
    const double* X = x.data();
    const double* G = gamma.data();
    const double* B = beta.data();
    double* Y = y.data();
    for (int i = 0; i < m; ++i) {
        const double* row = X + size_t(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += row[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + eps);
        if (cache) {
            cache->mean[i] = mean;
            cache->rstd[i] = rstd;
        }
        double* out = Y + size_t(i) * n;
        for (int j = 0; j < n; ++j) out[j] = (row[j] - mean) * rstd * G[j] + B[j];
    }
    Tensor shaped = y.reshaped(x.shape());
    return shaped;
}

void layernorm_bwd(const Tensor& x, const Tensor& gamma, const LayerNormCache& cache,
                   const Tensor& dy, Tensor& dx, Tensor& dgamma, Tensor& dbeta, double) {
    const int n = x.cols(), m = x.rows();
    const double* X = x.data();
    const double* G = gamma.data();
    const double* DY = dy.data();
    double* DX = dx.data();
    double* DG = dgamma.data();
    double* DB = dbeta.data();
    for (int i = 0; i < m; ++i) {
        const double* row = X + size_t(i) * n;
        const double* dyr = DY + size_t(i) * n;
        double* dxr = DX + size_t(i) * n;
        const double mean = cache.mean[i];
        const double rstd = cache.rstd[i];
        // xhat = (x-mean)*rstd; dxhat = dy*gamma
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < n; ++j) {
            const double xhat = (row[j] - mean) * rstd;
            const double dxhat = dyr[j] * G[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            DG[j] += dyr[j] * xhat;
            DB[j] += dyr[j];
        }
        const double inv_n = 1.0 / n;
        for (int j = 0; j < n; ++j) {
            const double xhat = (row[j] - mean) * rstd;
            const double dxhat = dyr[j] * G[j];
            dxr[j] += rstd * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
        }
    }
}

Tensor conv3x3s2(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 3) throw ShapeError("conv3x3s2: input must be [H,W,C]");
    const int H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("conv3x3s2: H and W must be even");
    if (w.ndim() != 4 || w.dim(1) != Ci || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("conv3x3s2: weight shape mismatch, got " + w.shape_str());
    const int Co = w.dim(0);
    if (static_cast<int>(b.numel()) != Co) throw ShapeError("conv3x3s2: bias length mismatch");
    const int Ho = H / 2, Wo = W / 2;
    Tensor y({Ho, Wo, Co});
    const double* X = x.data();
    const double* Wt = w.data();
    const double* B = b.data();
    double* Y = y.data();
    // repack [Co,Ci,3,3] -> [Co,ky,kx,Ci] so the ci loop is contiguous
    std::vector<double> wp(static_cast<size_t>(Co) * 9 * Ci);
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int k = 0; k < 9; ++k)
                wp[(size_t(co) * 9 + k) * Ci + ci] = Wt[(size_t(co) * Ci + ci) * 9 + k];
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (size_t(Ho) * Wo * Co * Ci * 9 > kParallelFlops)
#endif
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            double* out = Y + (size_t(oy) * Wo + ox) * Co;
            for (int co = 0; co < Co; ++co) out[co] = B[co];
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = 2 * ox + kx - 1;
                    if (ix < 0 || ix >= W) continue;
                    const double* px = X + (size_t(iy) * W + ix) * Ci;
                    const int k = ky * 3 + kx;
                    for (int co = 0; co < Co; ++co) {
                        const double* wrow = wp.data() + (size_t(co) * 9 + k) * Ci;
                        double acc = 0.0;
                        for (int ci = 0; ci < Ci; ++ci) acc += px[ci] * wrow[ci];
                        out[co] += acc;
                    }
                }
            }
        }
    }
    return y;
}

void conv3x3s2_bwd(const Tensor& x, const Tensor& w, const Tensor& dy,
                   Tensor& dx, Tensor& dw, Tensor& db) {
    const int H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
    const int Co = w.dim(0);
    const int Ho = H / 2, Wo = W / 2;
    const double* X = x.data();
    const double* Wt = w.data();
    const double* DY = dy.data();
    double* DX = dx.data();
    double* DW = dw.data();
    double* DB = db.data();
    // work against [Co,ky,kx,Ci]-packed copies so ci loops are contiguous
    std::vector<double> wp(static_cast<size_t>(Co) * 9 * Ci);
    std::vector<double> dwp(static_cast<size_t>(Co) * 9 * Ci, 0.0);
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int k = 0; k < 9; ++k)
                wp[(size_t(co) * 9 + k) * Ci + ci] = Wt[(size_t(co) * Ci + ci) * 9 + k];
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            const double* dout = DY + (size_t(oy) * Wo + ox) * Co;
            for (int co = 0; co < Co; ++co) DB[co] += dout[co];
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = 2 * ox + kx - 1;
                    if (ix < 0 || ix >= W) continue;
                    const double* px = X + (size_t(iy) * W + ix) * Ci;
                    double* dpx = DX + (size_t(iy) * W + ix) * Ci;
                    const int k = ky * 3 + kx;
                    for (int co = 0; co < Co; ++co) {
                        const double g = dout[co];
                        if (g == 0.0) continue;
                        const double* wrow = wp.data() + (size_t(co) * 9 + k) * Ci;
                        double* dwrow = dwp.data() + (size_t(co) * 9 + k) * Ci;
                        for (int ci = 0; ci < Ci; ++ci) {
                            dpx[ci] += g * wrow[ci];
                            dwrow[ci] += g * px[ci];
                        }
                    }
                }
            }
        }
    }
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int k = 0; k < 9; ++k)
                DW[(size_t(co) * Ci + ci) * 9 + k] += dwp[(size_t(co) * 9 + k) * Ci + ci];
}

namespace {

// Softmax over scores[0..len), max-subtracted. Shared by batch and
// incremental attention so both produce identical bits.
inline void softmax_span(double* scores, int len) {
    double mx = scores[0];
    for (int i = 1; i < len; ++i) mx = std::max(mx, scores[i]);
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
        scores[i] = fast_exp(scores[i] - mx);
        sum += scores[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < len; ++i) scores[i] *= inv;
}

}  // namespace

Tensor attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk,
                 const Tensor& bk, const Tensor& wv, const Tensor& bv, const Tensor& wo,
                 const Tensor& bo, int heads, bool causal, AttentionCache* cache) {
    const int T = x.rows(), D = x.cols();
    if (D % heads != 0) throw ShapeError("attention: dim not divisible by heads");
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor q = linear(x, wq, bq);
    Tensor k = linear(x, wk, bk);
    Tensor v = linear(x, wv, bv);
    Tensor att({T, D});
    Tensor probs;
    const bool keep = cache != nullptr;
    if (keep) probs = Tensor({heads, T, T});

    const double* Q = q.data();
    const double* K = k.data();
    const double* V = v.data();
    double* A = att.data();
    // per-head transposed copies keep the s loops contiguous; the per-element
    // accumulation order (ascending i, ascending s) matches attention_row
    std::vector<double> kt(static_cast<size_t>(dh) * T), vt(static_cast<size_t>(dh) * T);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < dh; ++i)
            for (int s = 0; s < T; ++s) {
                kt[static_cast<size_t>(i) * T + s] = K[size_t(s) * D + off + i];
                vt[static_cast<size_t>(i) * T + s] = V[size_t(s) * D + off + i];
            }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (size_t(T) * T * dh > kParallelFlops)
#endif
        for (int t = 0; t < T; ++t) {
            static thread_local std::vector<double> scores;
            scores.resize(static_cast<size_t>(T));
            const int klen = causal ? t + 1 : T;
            const double* qrow = Q + size_t(t) * D + off;
            for (int s = 0; s < klen; ++s) scores[static_cast<size_t>(s)] = 0.0;
            for (int i = 0; i < dh; ++i) {
                const double qv = qrow[i];
                const double* krow = kt.data() + static_cast<size_t>(i) * T;
                for (int s = 0; s < klen; ++s) scores[static_cast<size_t>(s)] += qv * krow[s];
            }
            for (int s = 0; s < klen; ++s) scores[static_cast<size_t>(s)] *= scale;
            softmax_span(scores.data(), klen);
            double* arow = A + size_t(t) * D + off;
            for (int i = 0; i < dh; ++i) {
                const double* vrow = vt.data() + static_cast<size_t>(i) * T;
                double acc = 0.0;
                for (int s = 0; s < klen; ++s) acc += scores[static_cast<size_t>(s)] * vrow[s];
                arow[i] = acc;
            }
            if (keep) {
                double* prow = probs.data() + (size_t(h) * T + t) * T;
                for (int s = 0; s < klen; ++s) prow[s] = scores[static_cast<size_t>(s)];
                for (int s = klen; s < T; ++s) prow[s] = 0.0;
            }
        }
    }
    Tensor y = linear(att, wo, bo);
    if (keep) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->att = std::move(att);
    }
    return y;
}

void attention_bwd(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                   const Tensor& wo, int heads, bool causal, const AttentionCache& cache,
                   const Tensor& dy, Tensor& dx, Tensor& dwq, Tensor& dbq, Tensor& dwk,
                   Tensor& dbk, Tensor& dwv, Tensor& dbv, Tensor& dwo, Tensor& dbo) {
    const int T = x.rows(), D = x.cols();
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // output projection: y = att * wo + bo
    matmul_at_acc(cache.att, dy, dwo);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < D; ++j) dbo[static_cast<size_t>(j)] += dy.at2(t, j);
    Tensor datt = matmul_bt(dy, wo);

    Tensor dq({T, D}), dk({T, D}), dv({T, D});
    const double* Q = cache.q.data();
    const double* K = cache.k.data();
    const double* V = cache.v.data();
    const double* P = cache.probs.data();
    std::vector<double> dscores(static_cast<size_t>(T));
    // transposed per-head scratch keeps every s loop contiguous
    std::vector<double> kt(static_cast<size_t>(dh) * T), vt(static_cast<size_t>(dh) * T);
    std::vector<double> dkt(static_cast<size_t>(dh) * T), dvt(static_cast<size_t>(dh) * T);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < dh; ++i)
            for (int s = 0; s < T; ++s) {
                kt[static_cast<size_t>(i) * T + s] = K[size_t(s) * D + off + i];
                vt[static_cast<size_t>(i) * T + s] = V[size_t(s) * D + off + i];
            }
        std::fill(dkt.begin(), dkt.end(), 0.0);
        std::fill(dvt.begin(), dvt.end(), 0.0);
        for (int t = 0; t < T; ++t) {
            const int klen = causal ? t + 1 : T;
            const double* prow = P + (size_t(h) * T + t) * T;
            const double* darow = datt.data() + size_t(t) * D + off;
            // dp = datt . V ; dV += p * datt
            for (int s = 0; s < klen; ++s) dscores[static_cast<size_t>(s)] = 0.0;
            for (int i = 0; i < dh; ++i) {
                const double dai = darow[i];
                const double* vrow = vt.data() + static_cast<size_t>(i) * T;
                double* dvrow = dvt.data() + static_cast<size_t>(i) * T;
                for (int s = 0; s < klen; ++s) {
                    dscores[static_cast<size_t>(s)] += dai * vrow[s];
                    dvrow[s] += prow[s] * dai;
                }
            }
            double dot = 0.0;
            for (int s = 0; s < klen; ++s) dot += dscores[static_cast<size_t>(s)] * prow[s];
            // softmax backward: ds = p * (dp - sum(dp*p)), then the scale
            for (int s = 0; s < klen; ++s)
                dscores[static_cast<size_t>(s)] =
                    prow[s] * (dscores[static_cast<size_t>(s)] - dot) * scale;
            const double* qrow = Q + size_t(t) * D + off;
            double* dqrow = dq.data() + size_t(t) * D + off;
            for (int i = 0; i < dh; ++i) {
                const double qi = qrow[i];
                const double* krow = kt.data() + static_cast<size_t>(i) * T;
                double* dkrow = dkt.data() + static_cast<size_t>(i) * T;
                double acc = 0.0;
                for (int s = 0; s < klen; ++s) {
                    acc += dscores[static_cast<size_t>(s)] * krow[s];
                    dkrow[s] += dscores[static_cast<size_t>(s)] * qi;
                }
                dqrow[i] += acc;
            }
        }
        for (int i = 0; i < dh; ++i)
            for (int s = 0; s < T; ++s) {
                dk.data()[size_t(s) * D + off + i] += dkt[static_cast<size_t>(i) * T + s];
                dv.data()[size_t(s) * D + off + i] += dvt[static_cast<size_t>(i) * T + s];
            }
    }
    // project back through the q/k/v linears
    matmul_at_acc(x, dq, dwq);
    matmul_at_acc(x, dk, dwk);
    matmul_at_acc(x, dv, dwv);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < D; ++j) {
            dbq[static_cast<size_t>(j)] += dq.at2(t, j);
            dbk[static_cast<size_t>(j)] += dk.at2(t, j);
            dbv[static_cast<size_t>(j)] += dv.at2(t, j);
        }
    Tensor dxq = matmul_bt(dq, wq);
    Tensor dxk = matmul_bt(dk, wk);
    Tensor dxv = matmul_bt(dv, wv);
    double* DX = dx.data();
    for (size_t i = 0; i < dx.numel(); ++i) DX[i] += dxq[i] + dxk[i] + dxv[i];
    (void)causal;
}

std::vector<double> attention_row(const std::vector<double>& q_row, const double* k_cache,
                                  const double* v_cache, int rows, int dim, int heads) {
    const int T = rows;
    const int D = dim;
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> out(static_cast<size_t>(D), 0.0);
    std::vector<double> scores(static_cast<size_t>(T));
    const double* K = k_cache;
    const double* V = v_cache;
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int s = 0; s < T; ++s) {
            const double* krow = K + size_t(s) * D + off;
            double acc = 0.0;
            for (int i = 0; i < dh; ++i) acc += q_row[static_cast<size_t>(off + i)] * krow[i];
            scores[static_cast<size_t>(s)] = acc * scale;
        }
        softmax_span(scores.data(), T);
        for (int s = 0; s < T; ++s) {
            const double p = scores[static_cast<size_t>(s)];
            const double* vrow = V + size_t(s) * D + off;
            for (int i = 0; i < dh; ++i) out[static_cast<size_t>(off + i)] += p * vrow[i];
        }
    }
    return out;
}

double masked_cross_entropy(const Tensor& logits, const std::vector<int>& next_ids,
                            Tensor* dlogits) {
    const int T = logits.rows(), V = logits.cols();
    if (static_cast<int>(next_ids.size()) != T)
        throw ShapeError("masked_cross_entropy: target length mismatch");
    int count = 0;
    double total = 0.0;
    std::vector<double> probs(static_cast<size_t>(V));
    // first pass to count targets so gradients can be scaled by 1/count
    for (int t = 0; t < T; ++t)
        if (next_ids[static_cast<size_t>(t)] >= 0) ++count;
    if (count == 0) throw TrainError("loss mask selects no positions");
    const double inv_count = 1.0 / count;
    for (int t = 0; t < T; ++t) {
        const int target = next_ids[static_cast<size_t>(t)];
        if (target < 0) continue;
        if (target >= V) throw ShapeError("masked_cross_entropy: target id out of range");
        const double* row = logits.data() + size_t(t) * V;
        double mx = row[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < V; ++j) {
            probs[static_cast<size_t>(j)] = fast_exp(row[j] - mx);
            sum += probs[static_cast<size_t>(j)];
        }
        const double log_z = std::log(sum) + mx;
        total += log_z - row[target];
        if (dlogits) {
            double* drow = dlogits->data() + size_t(t) * V;
            const double inv_sum = 1.0 / sum;
            for (int j = 0; j < V; ++j)
                drow[j] += (probs[static_cast<size_t>(j)] * inv_sum) * inv_count;
            drow[target] -= inv_count;
        }
    }
    return total * inv_count;
}

void softmax_rows(Tensor& x) {
    const int m = x.rows(), n = x.cols();
    for (int i = 0; i < m; ++i) softmax_span(x.data() + size_t(i) * n, n);
}

}  // namespace vary::kern
