#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "asem/tensor.hpp"

namespace asem {

// Reverse-mode autodiff over a flat tape. Nodes are created in topological
// order, so backward() is a reverse sweep over ids. Single-threaded and
// allocation-simple on purpose: every loss path in the model is exercised by
// finite-difference tests, which is only tractable if the op set stays small
// and each backward is hand-derivable.
template <typename T>
class Graph {
  public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        bool grad_alloc = false;
        std::function<void(Graph&, int)> backward;
    };

    int size() const { return (int)nodes_.size(); }

    const Tensor<T>& value(int id) const { return nodes_[(size_t)id].value; }

    // Gradient of the last backward() target w.r.t. node id. Zeros if the
    // node was never touched by the sweep.
    Tensor<T> grad(int id) const {
        const Node& n = nodes_[(size_t)id];
        if (n.grad_alloc) return n.grad;
        return Tensor<T>::zeros(n.value.shape);
    }

    int leaf(Tensor<T> v, bool needs_grad) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return size() - 1;
    }

    int constant(Tensor<T> v) { return leaf(std::move(v), false); }

    // ---- elementwise ----

    int add(int a, int b) {
        require_same_shape(a, b, "add");
        Tensor<T> out = value(a);
        const T* pb = value(b).ptr();
        T* po = out.ptr();
        for (int i = 0; i < out.numel(); ++i) po[i] += pb[i];
        return op(std::move(out), {a, b}, [a, b](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i) da[i] += d.data[(size_t)i];
            });
            g.accum(b, [&](T* db) {
                for (int i = 0; i < d.numel(); ++i) db[i] += d.data[(size_t)i];
            });
        });
    }

    int sub(int a, int b) {
        require_same_shape(a, b, "sub");
        Tensor<T> out = value(a);
        const T* pb = value(b).ptr();
        T* po = out.ptr();
        for (int i = 0; i < out.numel(); ++i) po[i] -= pb[i];
        return op(std::move(out), {a, b}, [a, b](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i) da[i] += d.data[(size_t)i];
            });
            g.accum(b, [&](T* db) {
                for (int i = 0; i < d.numel(); ++i) db[i] -= d.data[(size_t)i];
            });
        });
    }

    int mul(int a, int b) {
        require_same_shape(a, b, "mul");
        Tensor<T> out = value(a);
        const T* pb = value(b).ptr();
        T* po = out.ptr();
        for (int i = 0; i < out.numel(); ++i) po[i] *= pb[i];
        return op(std::move(out), {a, b}, [a, b](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& va = g.value(a);
            const Tensor<T>& vb = g.value(b);
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i) da[i] += d.data[(size_t)i] * vb.data[(size_t)i];
            });
            g.accum(b, [&](T* db) {
                for (int i = 0; i < d.numel(); ++i) db[i] += d.data[(size_t)i] * va.data[(size_t)i];
            });
        });
    }

    int scale(int a, T c) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v *= c;
        return op(std::move(out), {a}, [a, c](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i) da[i] += c * d.data[(size_t)i];
            });
        });
    }

    int relu(int a) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v = v > T(0) ? v : T(0);
        return op(std::move(out), {a}, [a](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& x = g.value(a);
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i)
                    if (x.data[(size_t)i] > T(0)) da[i] += d.data[(size_t)i];
            });
        });
    }

    // a [..., D] + bias [D]
    int add_bias(int a, int bias) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(bias);
        int d = va.shape.back();
        if (vb.rank() != 1 || vb.dim(0) != d)
            throw std::invalid_argument("add_bias: bias shape mismatch " + shape_str(vb.shape));
        Tensor<T> out = va;
        int rows = out.numel() / d;
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) out.data[(size_t)(r * d + j)] += vb.data[(size_t)j];
        return op(std::move(out), {a, bias}, [a, bias, rows, d](Graph& g, int self) {
            const Tensor<T>& dn = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int i = 0; i < dn.numel(); ++i) da[i] += dn.data[(size_t)i];
            });
            g.accum(bias, [&](T* db) {
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j) db[j] += dn.data[(size_t)(r * d + j)];
            });
        });
    }

    // ---- shape ----

    int reshape(int a, std::vector<int> shape) {
        const Tensor<T>& va = value(a);
        if (Tensor<T>::checked_numel(shape) != va.numel())
            throw std::invalid_argument("reshape: numel mismatch " + shape_str(va.shape) + " -> " +
                                        shape_str(shape));
        Tensor<T> out;
        out.shape = std::move(shape);
        out.data = va.data;
        return op(std::move(out), {a}, [a](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int i = 0; i < d.numel(); ++i) da[i] += d.data[(size_t)i];
            });
        });
    }

    // [..., M, N] -> [..., N, M]
    int transpose_last2(int a) {
        const Tensor<T>& va = value(a);
        if (va.rank() < 2) throw std::invalid_argument("transpose_last2: rank < 2");
        std::vector<int> s = va.shape;
        int n = s.back();
        int m = s[s.size() - 2];
        std::swap(s[s.size() - 2], s[s.size() - 1]);
        Tensor<T> out(s);
        int outer = va.numel() / (m * n);
        for (int o = 0; o < outer; ++o) {
            const T* src = va.ptr() + (size_t)o * m * n;
            T* dst = out.ptr() + (size_t)o * m * n;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
        }
        return op(std::move(out), {a}, [a, outer, m, n](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int o = 0; o < outer; ++o) {
                    const T* src = d.ptr() + (size_t)o * m * n;
                    T* dst = da + (size_t)o * m * n;
                    for (int j = 0; j < n; ++j)
                        for (int i = 0; i < m; ++i) dst[i * n + j] += src[j * m + i];
                }
            });
        });
    }

    // [A, B, C, D] -> [A, C, B, D]; used to split/merge attention heads.
    int swap_dims_1_2(int a) {
        const Tensor<T>& va = value(a);
        if (va.rank() != 4) throw std::invalid_argument("swap_dims_1_2: rank != 4");
        int A = va.dim(0), B = va.dim(1), C = va.dim(2), D = va.dim(3);
        Tensor<T> out({A, C, B, D});
        for (int x = 0; x < A; ++x)
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const T* src = va.ptr() + (((size_t)x * B + b) * C + c) * D;
                    T* dst = out.ptr() + (((size_t)x * C + c) * B + b) * D;
                    for (int j = 0; j < D; ++j) dst[j] = src[j];
                }
        return op(std::move(out), {a}, [a, A, B, C, D](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int x = 0; x < A; ++x)
                    for (int c = 0; c < C; ++c)
                        for (int b = 0; b < B; ++b) {
                            const T* src = d.ptr() + (((size_t)x * C + c) * B + b) * D;
                            T* dst = da + (((size_t)x * B + b) * C + c) * D;
                            for (int j = 0; j < D; ++j) dst[j] += src[j];
                        }
            });
        });
    }

    // ---- linear algebra ----

    // [M, K] x [K, N] -> [M, N]
    int matmul(int a, int b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
            throw std::invalid_argument("matmul: bad shapes " + shape_str(va.shape) + " x " +
                                        shape_str(vb.shape));
        int M = va.dim(0), K = va.dim(1), N = vb.dim(1);
        Tensor<T> out({M, N}, T(0));
        mm(va.ptr(), vb.ptr(), out.ptr(), M, K, N);
        return op(std::move(out), {a, b}, [a, b, M, K, N](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& va2 = g.value(a);
            const Tensor<T>& vb2 = g.value(b);
            g.accum(a, [&](T* da) { mm_nt(d.ptr(), vb2.ptr(), da, M, N, K); });
            g.accum(b, [&](T* db) { mm_tn(va2.ptr(), d.ptr(), db, M, K, N); });
        });
    }

    // [B, M, K] x [B, K, N] -> [B, M, N]
    int bmm(int a, int b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        if (va.rank() != 3 || vb.rank() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(1))
            throw std::invalid_argument("bmm: bad shapes " + shape_str(va.shape) + " x " +
                                        shape_str(vb.shape));
        int B = va.dim(0), M = va.dim(1), K = va.dim(2), N = vb.dim(2);
        Tensor<T> out({B, M, N}, T(0));
        for (int i = 0; i < B; ++i)
            mm(va.ptr() + (size_t)i * M * K, vb.ptr() + (size_t)i * K * N,
               out.ptr() + (size_t)i * M * N, M, K, N);
        return op(std::move(out), {a, b}, [a, b, B, M, K, N](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& va2 = g.value(a);
            const Tensor<T>& vb2 = g.value(b);
            g.accum(a, [&](T* da) {
                for (int i = 0; i < B; ++i)
                    mm_nt(d.ptr() + (size_t)i * M * N, vb2.ptr() + (size_t)i * K * N,
                          da + (size_t)i * M * K, M, N, K);
            });
            g.accum(b, [&](T* db) {
                for (int i = 0; i < B; ++i)
                    mm_tn(va2.ptr() + (size_t)i * M * K, d.ptr() + (size_t)i * M * N,
                          db + (size_t)i * K * N, M, K, N);
            });
        });
    }

    // ---- rows / gathers ----

    // table [V, E], ids (flat) -> out_shape must end in E and have
    // prod(out_shape)/E == ids.size()
    int embed_rows(int table, std::vector<int> ids, std::vector<int> out_shape) {
        const Tensor<T>& vt = value(table);
        if (vt.rank() != 2) throw std::invalid_argument("embed_rows: table rank != 2");
        int V = vt.dim(0), E = vt.dim(1);
        if (out_shape.back() != E) throw std::invalid_argument("embed_rows: out shape mismatch");
        Tensor<T> out(out_shape);
        if (out.numel() != (int)ids.size() * E)
            throw std::invalid_argument("embed_rows: ids/out mismatch");
        for (size_t r = 0; r < ids.size(); ++r) {
            int id = ids[r];
            if (id < 0 || id >= V) throw std::out_of_range("embed_rows: id out of range");
            const T* src = vt.ptr() + (size_t)id * E;
            T* dst = out.ptr() + r * E;
            for (int j = 0; j < E; ++j) dst[j] = src[j];
        }
        return op(std::move(out), {table},
                  [table, ids = std::move(ids), E](Graph& g, int self) {
                      const Tensor<T>& d = g.node(self).grad;
                      g.accum(table, [&](T* dt) {
                          for (size_t r = 0; r < ids.size(); ++r) {
                              const T* src = d.ptr() + r * E;
                              T* dst = dt + (size_t)ids[r] * E;
                              for (int j = 0; j < E; ++j) dst[j] += src[j];
                          }
                      });
                  });
    }

    // a viewed as [R, D] rows, coeffs[R] host constants: out row r = a row r * coeffs[r].
    int scale_rows(int a, std::vector<T> coeffs) {
        const Tensor<T>& va = value(a);
        int d = va.shape.back();
        int rows = va.numel() / d;
        if ((int)coeffs.size() != rows) throw std::invalid_argument("scale_rows: coeff count");
        Tensor<T> out = va;
        for (int r = 0; r < rows; ++r) {
            T c = coeffs[(size_t)r];
            T* p = out.ptr() + (size_t)r * d;
            for (int j = 0; j < d; ++j) p[j] *= c;
        }
        return op(std::move(out), {a},
                  [a, coeffs = std::move(coeffs), rows, d](Graph& g, int self) {
                      const Tensor<T>& dn = g.node(self).grad;
                      g.accum(a, [&](T* da) {
                          for (int r = 0; r < rows; ++r) {
                              T c = coeffs[(size_t)r];
                              const T* src = dn.ptr() + (size_t)r * d;
                              T* dst = da + (size_t)r * d;
                              for (int j = 0; j < d; ++j) dst[j] += c * src[j];
                          }
                      });
                  });
    }

    // a [B, L, D], mask01 flat [B*L] -> [B, D]; mean over positions with mask=1.
    // Rows with an empty mask are rejected at construction.
    int masked_mean_rows(int a, const std::vector<T>& mask01) {
        const Tensor<T>& va = value(a);
        if (va.rank() != 3) throw std::invalid_argument("masked_mean_rows: rank != 3");
        int B = va.dim(0), L = va.dim(1), D = va.dim(2);
        if ((int)mask01.size() != B * L) throw std::invalid_argument("masked_mean_rows: mask size");
        std::vector<T> w((size_t)B * L, T(0));
        for (int b = 0; b < B; ++b) {
            T n = T(0);
            for (int l = 0; l < L; ++l) n += mask01[(size_t)b * L + l];
            if (!(n > T(0))) throw std::invalid_argument("masked_mean_rows: empty mask row");
            for (int l = 0; l < L; ++l) w[(size_t)b * L + l] = mask01[(size_t)b * L + l] / n;
        }
        Tensor<T> out({B, D}, T(0));
        for (int b = 0; b < B; ++b)
            for (int l = 0; l < L; ++l) {
                T c = w[(size_t)b * L + l];
                if (c == T(0)) continue;
                const T* src = va.ptr() + ((size_t)b * L + l) * D;
                T* dst = out.ptr() + (size_t)b * D;
                for (int j = 0; j < D; ++j) dst[j] += c * src[j];
            }
        return op(std::move(out), {a}, [a, w = std::move(w), B, L, D](Graph& g, int self) {
            const Tensor<T>& dn = g.node(self).grad;
            g.accum(a, [&](T* da) {
                for (int b = 0; b < B; ++b)
                    for (int l = 0; l < L; ++l) {
                        T c = w[(size_t)b * L + l];
                        if (c == T(0)) continue;
                        const T* src = dn.ptr() + (size_t)b * D;
                        T* dst = da + ((size_t)b * L + l) * D;
                        for (int j = 0; j < D; ++j) dst[j] += c * src[j];
                    }
            });
        });
    }

    // out[b, ...] = a[b, ...] * s[b, col]   (a [B, ...], s [B, M])
    int mul_per_example(int a, int s, int col) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vs = value(s);
        if (vs.rank() != 2 || va.dim(0) != vs.dim(0) || col < 0 || col >= vs.dim(1))
            throw std::invalid_argument("mul_per_example: bad shapes");
        int B = va.dim(0), M = vs.dim(1);
        int stride = va.numel() / B;
        Tensor<T> out = va;
        for (int b = 0; b < B; ++b) {
            T c = vs.data[(size_t)b * M + col];
            T* p = out.ptr() + (size_t)b * stride;
            for (int j = 0; j < stride; ++j) p[j] *= c;
        }
        return op(std::move(out), {a, s}, [a, s, col, B, M, stride](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& va2 = g.value(a);
            const Tensor<T>& vs2 = g.value(s);
            g.accum(a, [&](T* da) {
                for (int b = 0; b < B; ++b) {
                    T c = vs2.data[(size_t)b * M + col];
                    const T* src = d.ptr() + (size_t)b * stride;
                    T* dst = da + (size_t)b * stride;
                    for (int j = 0; j < stride; ++j) dst[j] += c * src[j];
                }
            });
            g.accum(s, [&](T* ds) {
                for (int b = 0; b < B; ++b) {
                    const T* pd = d.ptr() + (size_t)b * stride;
                    const T* pa = va2.ptr() + (size_t)b * stride;
                    T acc = T(0);
                    for (int j = 0; j < stride; ++j) acc += pd[j] * pa[j];
                    ds[(size_t)b * M + col] += acc;
                }
            });
        });
    }

    // K tensors [B, D] -> [B, K, D]
    int stack_rows(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("stack_rows: empty");
        const Tensor<T>& v0 = value(xs[0]);
        if (v0.rank() != 2) throw std::invalid_argument("stack_rows: rank != 2");
        int B = v0.dim(0), D = v0.dim(1), K = (int)xs.size();
        for (int x : xs) require_shape(x, {B, D}, "stack_rows");
        Tensor<T> out({B, K, D});
        for (int k = 0; k < K; ++k) {
            const Tensor<T>& vk = value(xs[(size_t)k]);
            for (int b = 0; b < B; ++b) {
                const T* src = vk.ptr() + (size_t)b * D;
                T* dst = out.ptr() + ((size_t)b * K + k) * D;
                for (int j = 0; j < D; ++j) dst[j] = src[j];
            }
        }
        return op(std::move(out), xs, [xs, B, D, K](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            for (int k = 0; k < K; ++k)
                g.accum(xs[(size_t)k], [&](T* dx) {
                    for (int b = 0; b < B; ++b) {
                        const T* src = d.ptr() + ((size_t)b * K + k) * D;
                        T* dst = dx + (size_t)b * D;
                        for (int j = 0; j < D; ++j) dst[j] += src[j];
                    }
                });
        });
    }

    // ---- normalization / losses ----

    int softmax_last(int a) {
        Tensor<T> out = value(a);
        softmax_rows_inplace(out);
        return op(std::move(out), {a}, [a](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& y = g.value(self);
            int dlast = y.shape.back();
            int rows = y.numel() / dlast;
            g.accum(a, [&](T* da) {
                for (int r = 0; r < rows; ++r) {
                    const T* py = y.ptr() + (size_t)r * dlast;
                    const T* pd = d.ptr() + (size_t)r * dlast;
                    T s = T(0);
                    for (int j = 0; j < dlast; ++j) s += py[j] * pd[j];
                    T* pa = da + (size_t)r * dlast;
                    for (int j = 0; j < dlast; ++j) pa[j] += py[j] * (pd[j] - s);
                }
            });
        });
    }

    int log_softmax_last(int a) {
        const Tensor<T>& va = value(a);
        Tensor<T> out = va;
        int dlast = out.shape.back();
        int rows = out.numel() / dlast;
        for (int r = 0; r < rows; ++r) {
            T* p = out.ptr() + (size_t)r * dlast;
            T mx = p[0];
            for (int j = 1; j < dlast; ++j) mx = std::max(mx, p[j]);
            T lse = T(0);
            for (int j = 0; j < dlast; ++j) lse += std::exp(p[j] - mx);
            lse = mx + std::log(lse);
            for (int j = 0; j < dlast; ++j) p[j] -= lse;
        }
        return op(std::move(out), {a}, [a](Graph& g, int self) {
            const Tensor<T>& d = g.node(self).grad;
            const Tensor<T>& y = g.value(self);
            int dl = y.shape.back();
            int rs = y.numel() / dl;
            g.accum(a, [&](T* da) {
                for (int r = 0; r < rs; ++r) {
                    const T* py = y.ptr() + (size_t)r * dl;
                    const T* pd = d.ptr() + (size_t)r * dl;
                    T s = T(0);
                    for (int j = 0; j < dl; ++j) s += pd[j];
                    T* pa = da + (size_t)r * dl;
                    for (int j = 0; j < dl; ++j) pa[j] += pd[j] - std::exp(py[j]) * s;
                }
            });
        });
    }

    // LayerNorm over the last dim with learned gain/bias.
    int layer_norm(int a, int gain, int bias, T eps) {
        const Tensor<T>& va = value(a);
        int d = va.shape.back();
        require_shape(gain, {d}, "layer_norm gain");
        require_shape(bias, {d}, "layer_norm bias");
        int rows = va.numel() / d;
        const Tensor<T>& vg = value(gain);
        const Tensor<T>& vb = value(bias);
        Tensor<T> out(va.shape);
        Tensor<T> xhat(va.shape);
        std::vector<T> inv_std((size_t)rows);
        for (int r = 0; r < rows; ++r) {
            const T* px = va.ptr() + (size_t)r * d;
            T mu = T(0);
            for (int j = 0; j < d; ++j) mu += px[j];
            mu /= (T)d;
            T var = T(0);
            for (int j = 0; j < d; ++j) var += (px[j] - mu) * (px[j] - mu);
            var /= (T)d;
            T is = T(1) / std::sqrt(var + eps);
            inv_std[(size_t)r] = is;
            T* ph = xhat.ptr() + (size_t)r * d;
            T* po = out.ptr() + (size_t)r * d;
            for (int j = 0; j < d; ++j) {
                ph[j] = (px[j] - mu) * is;
                po[j] = ph[j] * vg.data[(size_t)j] + vb.data[(size_t)j];
            }
        }
        return op(std::move(out), {a, gain, bias},
                  [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                   d](Graph& g, int self) {
                      const Tensor<T>& dn = g.node(self).grad;
                      const Tensor<T>& vg2 = g.value(gain);
                      g.accum(a, [&](T* da) {
                          for (int r = 0; r < rows; ++r) {
                              const T* pd = dn.ptr() + (size_t)r * d;
                              const T* ph = xhat.ptr() + (size_t)r * d;
                              T m1 = T(0), m2 = T(0);
                              for (int j = 0; j < d; ++j) {
                                  T dh = pd[j] * vg2.data[(size_t)j];
                                  m1 += dh;
                                  m2 += dh * ph[j];
                              }
                              m1 /= (T)d;
                              m2 /= (T)d;
                              T is = inv_std[(size_t)r];
                              T* pa = da + (size_t)r * d;
                              for (int j = 0; j < d; ++j) {
                                  T dh = pd[j] * vg2.data[(size_t)j];
                                  pa[j] += is * (dh - m1 - ph[j] * m2);
                              }
                          }
                      });
                      g.accum(gain, [&](T* dg) {
                          for (int r = 0; r < rows; ++r) {
                              const T* pd = dn.ptr() + (size_t)r * d;
                              const T* ph = xhat.ptr() + (size_t)r * d;
                              for (int j = 0; j < d; ++j) dg[j] += pd[j] * ph[j];
                          }
                      });
                      g.accum(bias, [&](T* db) {
                          for (int r = 0; r < rows; ++r) {
                              const T* pd = dn.ptr() + (size_t)r * d;
                              for (int j = 0; j < d; ++j) db[j] += pd[j];
                          }
                      });
                  });
    }

    int sum_all(int a) {
        const Tensor<T>& va = value(a);
        T acc = T(0);
        for (T v : va.data) acc += v;
        return op(Tensor<T>::scalar(acc), {a}, [a](Graph& g, int self) {
            T gd = g.node(self).grad.data[0];
            const Tensor<T>& va2 = g.value(a);
            g.accum(a, [&](T* da) {
                for (int i = 0; i < va2.numel(); ++i) da[i] += gd;
            });
        });
    }

    // logp [B, C], targets [B] -> scalar: mean_b of -logp[b, t_b]
    int pick_nll_mean(int logp, std::vector<int> targets) {
        const Tensor<T>& v = value(logp);
        if (v.rank() != 2 || (int)targets.size() != v.dim(0))
            throw std::invalid_argument("pick_nll_mean: bad shapes");
        int B = v.dim(0), C = v.dim(1);
        T acc = T(0);
        for (int b = 0; b < B; ++b) {
            int t = targets[(size_t)b];
            if (t < 0 || t >= C) throw std::out_of_range("pick_nll_mean: target out of range");
            acc -= v.data[(size_t)b * C + t];
        }
        acc /= (T)B;
        return op(Tensor<T>::scalar(acc), {logp},
                  [logp, targets = std::move(targets), B, C](Graph& g, int self) {
                      T gd = g.node(self).grad.data[0];
                      g.accum(logp, [&](T* dl) {
                          for (int b = 0; b < B; ++b)
                              dl[(size_t)b * C + targets[(size_t)b]] -= gd / (T)B;
                      });
                  });
    }

    // logp flat rows [R, V]; mean of -logp[r, t_r] over rows with mask=1.
    int masked_token_nll(int logp, std::vector<int> targets, std::vector<T> mask01) {
        const Tensor<T>& v = value(logp);
        int V = v.shape.back();
        int R = v.numel() / V;
        if ((int)targets.size() != R || (int)mask01.size() != R)
            throw std::invalid_argument("masked_token_nll: bad sizes");
        T n = T(0);
        for (T m : mask01) n += m;
        if (!(n > T(0))) throw std::invalid_argument("masked_token_nll: empty mask");
        T acc = T(0);
        for (int r = 0; r < R; ++r) {
            if (mask01[(size_t)r] == T(0)) continue;
            int t = targets[(size_t)r];
            if (t < 0 || t >= V) throw std::out_of_range("masked_token_nll: target out of range");
            acc -= v.data[(size_t)r * V + t] * mask01[(size_t)r];
        }
        acc /= n;
        return op(Tensor<T>::scalar(acc), {logp},
                  [logp, targets = std::move(targets), mask01 = std::move(mask01), R, V,
                   n](Graph& g, int self) {
                      T gd = g.node(self).grad.data[0];
                      g.accum(logp, [&](T* dl) {
                          for (int r = 0; r < R; ++r) {
                              if (mask01[(size_t)r] == T(0)) continue;
                              dl[(size_t)r * V + targets[(size_t)r]] -= gd * mask01[(size_t)r] / n;
                          }
                      });
                  });
    }

    // ---- driver ----

    void backward(int loss) {
        if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss not scalar");
        for (Node& n : nodes_) {
            n.grad_alloc = false;
            n.grad = Tensor<T>();
        }
        grad_ref(loss).data[0] = T(1);
        for (int id = (int)nodes_.size() - 1; id >= 0; --id) {
            Node& n = nodes_[(size_t)id];
            if (n.backward && n.needs_grad && n.grad_alloc) n.backward(*this, id);
        }
    }

    Node& node(int id) { return nodes_[(size_t)id]; }

  private:
    std::vector<Node> nodes_;

    int op(Tensor<T> out, const std::vector<int>& parents,
           std::function<void(Graph&, int)> back) {
        Node n;
        n.value = std::move(out);
        for (int p : parents)
            if (nodes_[(size_t)p].needs_grad) n.needs_grad = true;
        if (n.needs_grad) n.backward = std::move(back);
        nodes_.push_back(std::move(n));
        return size() - 1;
    }

    Tensor<T>& grad_ref(int id) {
        Node& n = nodes_[(size_t)id];
        if (!n.grad_alloc) {
            n.grad = Tensor<T>::zeros(n.value.shape);
            n.grad_alloc = true;
        }
        return n.grad;
    }

    // Accumulate into parent p's grad only if p participates in the sweep.
    template <typename F>
    void accum(int p, F&& f) {
        if (!nodes_[(size_t)p].needs_grad) return;
        f(grad_ref(p).ptr());
    }

    void require_same_shape(int a, int b, const char* what) {
        if (!value(a).same_shape(value(b)))
            throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                        shape_str(value(a).shape) + " vs " +
                                        shape_str(value(b).shape));
    }

    void require_shape(int a, const std::vector<int>& s, const char* what) {
        if (value(a).shape != s)
            throw std::invalid_argument(std::string(what) + ": expected " + shape_str(s) +
                                        " got " + shape_str(value(a).shape));
    }

    static void softmax_rows_inplace(Tensor<T>& t) {
        int d = t.shape.back();
        int rows = t.numel() / d;
        for (int r = 0; r < rows; ++r) {
            T* p = t.ptr() + (size_t)r * d;
            T mx = p[0];
            for (int j = 1; j < d; ++j) mx = std::max(mx, p[j]);
            T s = T(0);
            for (int j = 0; j < d; ++j) {
                p[j] = std::exp(p[j] - mx);
                s += p[j];
            }
            for (int j = 0; j < d; ++j) p[j] /= s;
        }
    }

    // C += A[M,K] * B[K,N]
    static void mm(const T* A, const T* B, T* C, int M, int K, int N) {
        for (int i = 0; i < M; ++i) {
            T* c = C + (size_t)i * N;
            for (int k = 0; k < K; ++k) {
                T a = A[(size_t)i * K + k];
                if (a == T(0)) continue;
                const T* b = B + (size_t)k * N;
                for (int j = 0; j < N; ++j) c[j] += a * b[j];
            }
        }
    }

    // C += A[M,N] * B^T where B is [K,N]  -> C [M,K]
    static void mm_nt(const T* A, const T* B, T* C, int M, int N, int K) {
        for (int i = 0; i < M; ++i) {
            const T* a = A + (size_t)i * N;
            T* c = C + (size_t)i * K;
            for (int k = 0; k < K; ++k) {
                const T* b = B + (size_t)k * N;
                T s = T(0);
                for (int j = 0; j < N; ++j) s += a[j] * b[j];
                c[k] += s;
            }
        }
    }

    // C += A^T * B where A is [M,K], B is [M,N] -> C [K,N]
    static void mm_tn(const T* A, const T* B, T* C, int M, int K, int N) {
        for (int i = 0; i < M; ++i) {
            const T* a = A + (size_t)i * K;
            const T* b = B + (size_t)i * N;
            for (int k = 0; k < K; ++k) {
                T av = a[k];
                if (av == T(0)) continue;
                T* c = C + (size_t)k * N;
                for (int j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    }
};

}  // namespace asem
