#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowcast/array.hpp"

namespace flowcast {

struct Param {
    std::string name;
    Array value;
    Array grad;

    Param(std::string n, Array v) : name(std::move(n)), value(std::move(v)) {
        grad = Array::zeros(value.rows(), value.cols());
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct Var {
    int id = -1;
};

namespace detail {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenMat>;
using ConstMatMap = Eigen::Map<const EigenMat>;

inline ConstMatMap as_eigen(const Array& a) {
    return ConstMatMap(a.data.data(), a.rows(), a.cols());
}
inline MatMap as_eigen(Array& a) { return MatMap(a.data.data(), a.rows(), a.cols()); }

}  // namespace detail

// Reverse-mode tape over dense arrays. Nodes are appended in topological
// order, so one reverse sweep over creation order visits each node exactly
// once. Every forward op checks its output for NaN/Inf and fails loudly.
class Tape {
public:
    const Array& value(Var v) const { return nodes_[check(v)].value; }

    Array& grad(Var v) { return ensure_grad(check(v)); }

    size_t node_count() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        param_leaves_.clear();
    }

    // ---- leaves ----

    Var input(Array value) { return push("input", std::move(value), {}); }

    Var param(Param& p) {
        Var v = push("param", p.value, {});
        param_leaves_.emplace_back(v.id, &p);
        return v;
    }

    // ---- arithmetic ----

    Var matmul(Var a, Var b) {
        const Array& A = value(a);
        const Array& B = value(b);
        if (A.cols() != B.rows())
            throw std::runtime_error("matmul: shape mismatch " + A.shape_str() + " x " +
                                     B.shape_str());
        Array out(A.rows(), B.cols());
        detail::as_eigen(out).noalias() = detail::as_eigen(A) * detail::as_eigen(B);
        return push("matmul", std::move(out), [a, b](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& A = t.value(a);
            const Array& B = t.value(b);
            detail::as_eigen(t.ensure_grad(a.id)).noalias() +=
                detail::as_eigen(g) * detail::as_eigen(B).transpose();
            detail::as_eigen(t.ensure_grad(b.id)).noalias() +=
                detail::as_eigen(A).transpose() * detail::as_eigen(g);
        });
    }

    Var transpose(Var a) {
        const Array& A = value(a);
        Array out(A.cols(), A.rows());
        detail::as_eigen(out) = detail::as_eigen(A).transpose();
        return push("transpose", std::move(out), [a](Tape& t, int self) {
            detail::as_eigen(t.ensure_grad(a.id)) +=
                detail::as_eigen(t.nodes_[self].grad).transpose();
        });
    }

    // Same-shape addition, or broadcast of a 1 x n row across every row of a.
    Var add(Var a, Var b) {
        const Array& A = value(a);
        const Array& B = value(b);
        if (A.same_shape(B)) {
            Array out = A;
            for (size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
            return push("add", std::move(out), [a, b](Tape& t, int self) {
                const Array& g = t.nodes_[self].grad;
                Array& ga = t.ensure_grad(a.id);
                Array& gb = t.ensure_grad(b.id);
                for (size_t i = 0; i < g.size(); ++i) {
                    ga.data[i] += g.data[i];
                    gb.data[i] += g.data[i];
                }
            });
        }
        if (B.rows() == 1 && B.cols() == A.cols()) {
            Array out = A;
            for (int r = 0; r < A.rows(); ++r)
                for (int c = 0; c < A.cols(); ++c) out.at(r, c) += B.at(0, c);
            return push("add", std::move(out), [a, b](Tape& t, int self) {
                const Array& g = t.nodes_[self].grad;
                Array& ga = t.ensure_grad(a.id);
                Array& gb = t.ensure_grad(b.id);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) gb.at(0, c) += g.at(r, c);
            });
        }
        throw std::runtime_error("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    }

    Var hadamard(Var a, Var b) {
        const Array& A = value(a);
        const Array& B = value(b);
        if (!A.same_shape(B))
            throw std::runtime_error("hadamard: shape mismatch " + A.shape_str() + " vs " +
                                     B.shape_str());
        Array out = A;
        for (size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
        return push("hadamard", std::move(out), [a, b](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& A = t.value(a);
            const Array& B = t.value(b);
            Array& ga = t.ensure_grad(a.id);
            Array& gb = t.ensure_grad(b.id);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] * B.data[i];
                gb.data[i] += g.data[i] * A.data[i];
            }
        });
    }

    Var scale(Var a, double k) {
        Array out = value(a);
        for (double& v : out.data) v *= k;
        return push("scale", std::move(out), [a, k](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& ga = t.ensure_grad(a.id);
            for (size_t i = 0; i < g.size(); ++i) ga.data[i] += k * g.data[i];
        });
    }

    // ---- activations ----

    Var tanh_op(Var a) {
        Array out = value(a);
        for (double& v : out.data) v = std::tanh(v);
        return push("tanh", std::move(out), [a](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& y = t.nodes_[self].value;
            Array& ga = t.ensure_grad(a.id);
            for (size_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        });
    }

    Var sigmoid(Var a) {
        Array out = value(a);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return push("sigmoid", std::move(out), [a](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& y = t.nodes_[self].value;
            Array& ga = t.ensure_grad(a.id);
            for (size_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        });
    }

    // ELU with alpha = 1: smooth enough for finite-difference checks.
    Var elu(Var a) {
        Array out = value(a);
        for (double& v : out.data) v = v > 0.0 ? v : std::expm1(v);
        return push("elu", std::move(out), [a](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& y = t.nodes_[self].value;
            Array& ga = t.ensure_grad(a.id);
            for (size_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * (y.data[i] > 0.0 ? 1.0 : y.data[i] + 1.0);
        });
    }

    // axis 1: normalise across each row; axis 0: down each column.
    Var softmax(Var a, int axis = 1) {
        if (axis != 0 && axis != 1) throw std::runtime_error("softmax: axis must be 0 or 1");
        const Array& A = value(a);
        Array out = A;
        const int nslices = axis == 1 ? A.rows() : A.cols();
        const int slice_len = axis == 1 ? A.cols() : A.rows();
        for (int s = 0; s < nslices; ++s) {
            double m = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < slice_len; ++i)
                m = std::max(m, axis == 1 ? A.at(s, i) : A.at(i, s));
            double sum = 0.0;
            for (int i = 0; i < slice_len; ++i) {
                double& v = axis == 1 ? out.at(s, i) : out.at(i, s);
                v = std::exp(v - m);
                sum += v;
            }
            for (int i = 0; i < slice_len; ++i) {
                double& v = axis == 1 ? out.at(s, i) : out.at(i, s);
                v /= sum;
            }
        }
        return push("softmax", std::move(out), [a, axis](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            const Array& y = t.nodes_[self].value;
            Array& ga = t.ensure_grad(a.id);
            const int nslices = axis == 1 ? y.rows() : y.cols();
            const int slice_len = axis == 1 ? y.cols() : y.rows();
            for (int s = 0; s < nslices; ++s) {
                double dot = 0.0;
                for (int i = 0; i < slice_len; ++i) {
                    double gi = axis == 1 ? g.at(s, i) : g.at(i, s);
                    double yi = axis == 1 ? y.at(s, i) : y.at(i, s);
                    dot += gi * yi;
                }
                for (int i = 0; i < slice_len; ++i) {
                    double gi = axis == 1 ? g.at(s, i) : g.at(i, s);
                    double yi = axis == 1 ? y.at(s, i) : y.at(i, s);
                    double& gai = axis == 1 ? ga.at(s, i) : ga.at(i, s);
                    gai += yi * (gi - dot);
                }
            }
        });
    }

    // ---- structure ----

    Var concat(std::span<const Var> parts, int axis) {
        if (parts.empty()) throw std::runtime_error("concat: no inputs");
        if (axis != 0 && axis != 1) throw std::runtime_error("concat: axis must be 0 or 1");
        int rows = value(parts[0]).rows(), cols = value(parts[0]).cols();
        int total = 0;
        for (Var p : parts) {
            const Array& a = value(p);
            if (axis == 0 && a.cols() != cols)
                throw std::runtime_error("concat: column mismatch");
            if (axis == 1 && a.rows() != rows)
                throw std::runtime_error("concat: row mismatch");
            total += axis == 0 ? a.rows() : a.cols();
        }
        Array out(axis == 0 ? total : rows, axis == 0 ? cols : total);
        int off = 0;
        for (Var p : parts) {
            const Array& a = value(p);
            for (int r = 0; r < a.rows(); ++r)
                for (int c = 0; c < a.cols(); ++c) {
                    if (axis == 0) out.at(off + r, c) = a.at(r, c);
                    else out.at(r, off + c) = a.at(r, c);
                }
            off += axis == 0 ? a.rows() : a.cols();
        }
        std::vector<Var> ps(parts.begin(), parts.end());
        return push("concat", std::move(out), [ps, axis](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            int off = 0;
            for (Var p : ps) {
                Array& gp = t.ensure_grad(p.id);
                for (int r = 0; r < gp.rows(); ++r)
                    for (int c = 0; c < gp.cols(); ++c) {
                        if (axis == 0) gp.at(r, c) += g.at(off + r, c);
                        else gp.at(r, c) += g.at(r, off + c);
                    }
                off += axis == 0 ? gp.rows() : gp.cols();
            }
        });
    }

    Var concat(std::initializer_list<Var> parts, int axis) {
        std::vector<Var> v(parts);
        return concat(std::span<const Var>(v), axis);
    }

    Var slice(Var x, int axis, int start, int len) {
        const Array& X = value(x);
        if (axis != 0 && axis != 1) throw std::runtime_error("slice: axis must be 0 or 1");
        int extent = axis == 0 ? X.rows() : X.cols();
        if (start < 0 || len < 1 || start + len > extent)
            throw std::runtime_error("slice: range [" + std::to_string(start) + ", " +
                                     std::to_string(start + len) + ") outside extent " +
                                     std::to_string(extent));
        Array out(axis == 0 ? len : X.rows(), axis == 0 ? X.cols() : len);
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c)
                out.at(r, c) = axis == 0 ? X.at(start + r, c) : X.at(r, start + c);
        return push("slice", std::move(out), [x, axis, start](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& gx = t.ensure_grad(x.id);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) {
                    if (axis == 0) gx.at(start + r, c) += g.at(r, c);
                    else gx.at(r, start + c) += g.at(r, c);
                }
        });
    }

    Var row_gather(Var x, std::vector<int> rows) {
        const Array& X = value(x);
        for (int r : rows)
            if (r < 0 || r >= X.rows())
                throw std::runtime_error("row_gather: index " + std::to_string(r) +
                                         " outside " + X.shape_str());
        Array out(static_cast<int>(rows.size()), X.cols());
        for (size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < X.cols(); ++c) out.at(static_cast<int>(i), c) = X.at(rows[i], c);
        return push("row_gather", std::move(out), [x, rows = std::move(rows)](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& gx = t.ensure_grad(x.id);
            for (size_t i = 0; i < rows.size(); ++i)
                for (int c = 0; c < g.cols(); ++c)
                    gx.at(rows[i], c) += g.at(static_cast<int>(i), c);
        });
    }

    // base with rows[i] replaced by repl row i. Indices must be distinct.
    Var scatter_rows(Var base, std::vector<int> rows, Var repl) {
        const Array& B = value(base);
        const Array& R = value(repl);
        if (R.rows() != static_cast<int>(rows.size()) || R.cols() != B.cols())
            throw std::runtime_error("scatter_rows: shape mismatch");
        Array out = B;
        for (size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] < 0 || rows[i] >= B.rows())
                throw std::runtime_error("scatter_rows: index outside base");
            for (int c = 0; c < B.cols(); ++c) out.at(rows[i], c) = R.at(static_cast<int>(i), c);
        }
        return push("scatter_rows", std::move(out),
                    [base, repl, rows = std::move(rows)](Tape& t, int self) {
                        const Array& g = t.nodes_[self].grad;
                        Array& gb = t.ensure_grad(base.id);
                        Array& gr = t.ensure_grad(repl.id);
                        std::vector<bool> replaced(static_cast<size_t>(g.rows()), false);
                        for (int r : rows) replaced[static_cast<size_t>(r)] = true;
                        for (int r = 0; r < g.rows(); ++r)
                            if (!replaced[static_cast<size_t>(r)])
                                for (int c = 0; c < g.cols(); ++c) gb.at(r, c) += g.at(r, c);
                        for (size_t i = 0; i < rows.size(); ++i)
                            for (int c = 0; c < g.cols(); ++c)
                                gr.at(static_cast<int>(i), c) += g.at(rows[i], c);
                    });
    }

    Var mean_rows(Var x) {
        const Array& X = value(x);
        if (X.rows() < 1) throw std::runtime_error("mean_rows: empty input");
        Array out(1, X.cols());
        for (int r = 0; r < X.rows(); ++r)
            for (int c = 0; c < X.cols(); ++c) out.at(0, c) += X.at(r, c);
        for (double& v : out.data) v /= X.rows();
        return push("mean_rows", std::move(out), [x](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& gx = t.ensure_grad(x.id);
            double inv = 1.0 / gx.rows();
            for (int r = 0; r < gx.rows(); ++r)
                for (int c = 0; c < gx.cols(); ++c) gx.at(r, c) += g.at(0, c) * inv;
        });
    }

    Var repeat_rows(Var x, int n) {
        const Array& X = value(x);
        if (X.rows() != 1) throw std::runtime_error("repeat_rows: input must be 1 x d");
        Array out(n, X.cols());
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < X.cols(); ++c) out.at(r, c) = X.at(0, c);
        return push("repeat_rows", std::move(out), [x](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& gx = t.ensure_grad(x.id);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) gx.at(0, c) += g.at(r, c);
        });
    }

    // ---- sequence ops ----

    // 1-D convolution along rows. x is (L x Cin), w is (kw*Cin x Cout) with
    // taps ordered oldest-to-newest, b is (1 x Cout). Left zero padding of
    // pad_left keeps the op causal; pad_left = kw-1 with stride 1 preserves
    // the sequence length.
    Var conv1d(Var x, Var w, Var b, int kernel_width, int stride = 1, int pad_left = -1) {
        if (pad_left < 0) pad_left = kernel_width - 1;
        const Array& X = value(x);
        const Array& W = value(w);
        const int L = X.rows(), cin = X.cols();
        if (W.rows() != kernel_width * cin)
            throw std::runtime_error("conv1d: weight rows " + std::to_string(W.rows()) +
                                     " != kw*Cin " + std::to_string(kernel_width * cin));
        if (stride < 1) throw std::runtime_error("conv1d: stride must be >= 1");
        const int lout = (L + pad_left - kernel_width) / stride + 1;
        if (lout < 1) throw std::runtime_error("conv1d: sequence shorter than kernel");

        Array patches(lout, kernel_width * cin);
        for (int t = 0; t < lout; ++t)
            for (int j = 0; j < kernel_width; ++j) {
                int pos = t * stride - pad_left + j;
                if (pos < 0) continue;
                for (int c = 0; c < cin; ++c) patches.at(t, j * cin + c) = X.at(pos, c);
            }
        Array out(lout, W.cols());
        detail::as_eigen(out).noalias() = detail::as_eigen(patches) * detail::as_eigen(W);
        const Array& Bb = value(b);
        if (Bb.rows() != 1 || Bb.cols() != W.cols())
            throw std::runtime_error("conv1d: bias must be 1 x Cout");
        for (int r = 0; r < lout; ++r)
            for (int c = 0; c < out.cols(); ++c) out.at(r, c) += Bb.at(0, c);

        return push("conv1d", std::move(out),
                    [x, w, b, patches = std::move(patches), kernel_width, stride,
                     pad_left](Tape& t, int self) {
                        const Array& g = t.nodes_[self].grad;
                        const Array& W = t.value(w);
                        Array& gx = t.ensure_grad(x.id);
                        Array& gw = t.ensure_grad(w.id);
                        Array& gb = t.ensure_grad(b.id);
                        detail::as_eigen(gw).noalias() +=
                            detail::as_eigen(patches).transpose() * detail::as_eigen(g);
                        for (int r = 0; r < g.rows(); ++r)
                            for (int c = 0; c < g.cols(); ++c) gb.at(0, c) += g.at(r, c);
                        Array gpatch(patches.rows(), patches.cols());
                        detail::as_eigen(gpatch).noalias() =
                            detail::as_eigen(g) * detail::as_eigen(W).transpose();
                        const int cin = gx.cols();
                        for (int tt = 0; tt < gpatch.rows(); ++tt)
                            for (int j = 0; j < kernel_width; ++j) {
                                int pos = tt * stride - pad_left + j;
                                if (pos < 0) continue;
                                for (int c = 0; c < cin; ++c)
                                    gx.at(pos, c) += gpatch.at(tt, j * cin + c);
                            }
                    });
    }

    // Inverted dropout: in train mode zero with probability p and scale
    // survivors by 1/(1-p); identity in eval mode.
    Var dropout(Var x, double p, bool train, Rng& rng) {
        if (p < 0.0 || p >= 1.0) throw std::runtime_error("dropout: p must be in [0, 1)");
        if (!train || p == 0.0) return x;
        const Array& X = value(x);
        std::vector<std::uint8_t> keep(X.size());
        const double s = 1.0 / (1.0 - p);
        Array out = X;
        for (size_t i = 0; i < X.size(); ++i) {
            keep[i] = rng.uniform() >= p ? 1 : 0;
            out.data[i] = keep[i] ? X.data[i] * s : 0.0;
        }
        return push("dropout", std::move(out), [x, keep = std::move(keep), s](Tape& t, int self) {
            const Array& g = t.nodes_[self].grad;
            Array& gx = t.ensure_grad(x.id);
            for (size_t i = 0; i < g.size(); ++i)
                if (keep[i]) gx.data[i] += g.data[i] * s;
        });
    }

    // Row-wise layer normalisation with learnable gain/offset (1 x d each).
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
        const Array& X = value(x);
        const int d = X.cols();
        if (value(gamma).cols() != d || value(beta).cols() != d)
            throw std::runtime_error("layer_norm: gain/offset width mismatch");
        Array xhat(X.rows(), d);
        std::vector<double> inv_std(static_cast<size_t>(X.rows()));
        Array out(X.rows(), d);
        const Array& G = value(gamma);
        const Array& Bt = value(beta);
        for (int r = 0; r < X.rows(); ++r) {
            double mean = 0.0;
            for (int c = 0; c < d; ++c) mean += X.at(r, c);
            mean /= d;
            double var = 0.0;
            for (int c = 0; c < d; ++c) {
                double dv = X.at(r, c) - mean;
                var += dv * dv;
            }
            var /= d;
            double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(r)] = is;
            for (int c = 0; c < d; ++c) {
                xhat.at(r, c) = (X.at(r, c) - mean) * is;
                out.at(r, c) = xhat.at(r, c) * G.at(0, c) + Bt.at(0, c);
            }
        }
        return push("layer_norm", std::move(out),
                    [x, gamma, beta, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](Tape& t, int self) {
                        const Array& g = t.nodes_[self].grad;
                        const Array& G = t.value(gamma);
                        Array& gx = t.ensure_grad(x.id);
                        Array& gg = t.ensure_grad(gamma.id);
                        Array& gb = t.ensure_grad(beta.id);
                        const int d = g.cols();
                        for (int r = 0; r < g.rows(); ++r) {
                            double sum_dy = 0.0, sum_dyx = 0.0;
                            for (int c = 0; c < d; ++c) {
                                double dyg = g.at(r, c) * G.at(0, c);
                                sum_dy += dyg;
                                sum_dyx += dyg * xhat.at(r, c);
                                gg.at(0, c) += g.at(r, c) * xhat.at(r, c);
                                gb.at(0, c) += g.at(r, c);
                            }
                            for (int c = 0; c < d; ++c) {
                                double dyg = g.at(r, c) * G.at(0, c);
                                gx.at(r, c) += inv_std[static_cast<size_t>(r)] *
                                               (dyg - sum_dy / d - xhat.at(r, c) * sum_dyx / d);
                            }
                        }
                    });
    }

    // Max over consecutive row pairs, stride 2; an odd trailing row passes
    // through. Output has ceil(L/2) rows.
    Var max_pool_rows(Var x) {
        const Array& X = value(x);
        const int L = X.rows();
        const int lout = (L + 1) / 2;
        Array out(lout, X.cols());
        std::vector<int> argmax(static_cast<size_t>(lout) * X.cols());
        for (int r = 0; r < lout; ++r)
            for (int c = 0; c < X.cols(); ++c) {
                int a = 2 * r, b = std::min(2 * r + 1, L - 1);
                int best = X.at(a, c) >= X.at(b, c) ? a : b;
                out.at(r, c) = X.at(best, c);
                argmax[static_cast<size_t>(r) * X.cols() + c] = best;
            }
        return push("max_pool_rows", std::move(out),
                    [x, argmax = std::move(argmax)](Tape& t, int self) {
                        const Array& g = t.nodes_[self].grad;
                        Array& gx = t.ensure_grad(x.id);
                        for (int r = 0; r < g.rows(); ++r)
                            for (int c = 0; c < g.cols(); ++c)
                                gx.at(argmax[static_cast<size_t>(r) * g.cols() + c], c) +=
                                    g.at(r, c);
                    });
    }

    Var mse_loss(Var pred, Var target) {
        const Array& P = value(pred);
        const Array& T = value(target);
        if (!P.same_shape(T))
            throw std::runtime_error("mse_loss: shape mismatch " + P.shape_str() + " vs " +
                                     T.shape_str());
        double sum = 0.0;
        for (size_t i = 0; i < P.size(); ++i) {
            double d = P.data[i] - T.data[i];
            sum += d * d;
        }
        Array out = Array::scalar(sum / static_cast<double>(P.size()));
        return push("mse_loss", std::move(out), [pred, target](Tape& t, int self) {
            const double g = t.nodes_[self].grad.data[0];
            const Array& P = t.value(pred);
            const Array& T = t.value(target);
            Array& gp = t.ensure_grad(pred.id);
            Array& gt = t.ensure_grad(target.id);
            const double k = 2.0 * g / static_cast<double>(P.size());
            for (size_t i = 0; i < P.size(); ++i) {
                double d = k * (P.data[i] - T.data[i]);
                gp.data[i] += d;
                gt.data[i] -= d;
            }
        });
    }

    // ---- backward ----

    void backward(Var loss) {
        Node& ln = nodes_[check(loss)];
        if (ln.value.size() != 1) throw std::runtime_error("backward: loss must be scalar");
        ensure_grad(loss.id).data[0] = 1.0;
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.touched || !n.bwd) continue;
            n.bwd(*this, id);
        }
        for (auto& [id, p] : param_leaves_) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.touched) continue;
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad.data[i] += n.grad.data[i];
        }
    }

private:
    struct Node {
        Array value;
        Array grad;
        bool touched = false;
        std::function<void(Tape&, int)> bwd;
        const char* op = "";
    };

    size_t check(Var v) const {
        if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::runtime_error("tape: dangling variable");
        return static_cast<size_t>(v.id);
    }

    Array& ensure_grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.touched) {
            n.grad = Array::zeros(n.value.rows(), n.value.cols());
            n.touched = true;
        }
        return n.grad;
    }

    Var push(const char* op, Array value, std::function<void(Tape&, int)> bwd) {
        if (!value.all_finite())
            throw std::runtime_error(std::string("op '") + op + "': non-finite output");
        Node n;
        n.value = std::move(value);
        n.bwd = std::move(bwd);
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::deque<Node> nodes_;
    std::vector<std::pair<int, Param*>> param_leaves_;
};

}  // namespace flowcast
