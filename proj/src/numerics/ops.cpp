#include "mpt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mpt/error.hpp"

namespace mpt::ops {
namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t axis = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.axis = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Number of times b repeats inside a (a == b.shape or b.shape is a suffix of a).
std::size_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return 1;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return shape_size(b) == 0 ? 0 : shape_size(a) / shape_size(b);
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b) + " onto " +
                   shape_string(a));
}

void accumulate_into(Tape& tape, Var input, const auto& fn) {
  if (input.valid() && tape.requires_grad(input.id())) fn(tape.grad_accumulator(input.id()));
}

Var add_scaled(Var a, Var b, double alpha, const char* name) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  const std::size_t reps = broadcast_repeats(av.shape(), bv.shape(), name);
  const std::size_t n = bv.size();
  DenseArray out = av;
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] += alpha * bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b, alpha, reps, n](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, a, [&](DenseArray& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate_into(tape, b, [&](DenseArray& gb) {
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < n; ++i) gb[i] += alpha * g[r * n + i];
    });
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void check_targets(const DenseArray& logits, const DenseArray& targets, const DenseArray* mask) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_string(logits.shape()) + " vs targets " +
                     shape_string(targets.shape()));
  }
  if (mask && mask->shape() != logits.shape()) throw ShapeError("bce_with_logits: mask shape mismatch");
  for (double t : targets.data()) {
    if (t != 0.0 && t != 1.0) throw InputError("bce_with_logits: target outside {0,1}");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain kernels

DenseArray softmax_lastdim(const DenseArray& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError("softmax_lastdim: last extent must be >= 1, got " + shape_string(x.shape()));
  }
  if (!x.all_finite()) throw NumericError("softmax_lastdim: non-finite input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  DenseArray out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double m = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - m);
      total += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= total;
  }
  return out;
}

DenseArray layer_norm(const DenseArray& x, const DenseArray& gain, const DenseArray& bias, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("layer_norm: zero-length last dimension");
  const std::size_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n) throw ShapeError("layer_norm: gain/bias must match last extent");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  DenseArray out(x.shape());
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += in[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = gain[i] * (in[i] - mean) * rstd + bias[i];
  }
  return out;
}

DenseArray gelu(const DenseArray& x) {
  DenseArray out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu_value(x[i]);
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(const DenseArray& logits, const DenseArray& targets, const DenseArray* mask) {
  check_targets(logits, targets, mask);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask && (*mask)[i] == 0.0) continue;
    const double z = logits[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) { return add_scaled(a, b, 1.0, "add"); }

Var sub(Var a, Var b) { return add_scaled(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  const std::size_t reps = broadcast_repeats(av.shape(), bv.shape(), "mul");
  const std::size_t n = bv.size();
  DenseArray out(av.shape());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = av[r * n + i] * bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b, reps, n](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& av = a.value();
    const DenseArray& bv = b.value();
    accumulate_into(tape, a, [&](DenseArray& ga) {
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < n; ++i) ga[r * n + i] += g[r * n + i] * bv[i];
    });
    accumulate_into(tape, b, [&](DenseArray& gb) {
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i] * av[r * n + i];
    });
  });
}

Var scale(Var a, double factor) {
  DenseArray out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, a, [&](DenseArray& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  });
}

Var gelu(Var x) {
  return x.tape().record(gelu(x.value()), {x}, [x](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& xv = x.value();
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
    });
  });
}

// ---------------------------------------------------------------------------
// Matrix products

Var linear(Var x, Var w, std::optional<Var> b) {
  const DenseArray& xv = x.value();
  const DenseArray& wv = w.value();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.shape().back() != wv.extent(0)) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  }
  const std::size_t in = wv.extent(0);
  const std::size_t out_dim = wv.extent(1);
  if (b && (b->value().rank() != 1 || b->value().extent(0) != out_dim)) {
    throw ShapeError("linear: bias " + shape_string(b->shape()) + " vs out " + std::to_string(out_dim));
  }
  const std::size_t rows = in == 0 ? 0 : xv.size() / in;
  Shape out_shape = xv.shape();
  out_shape.back() = out_dim;
  DenseArray out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data().data() + r * out_dim;
    if (b) std::copy(b->value().data().begin(), b->value().data().end(), o);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xv[r * in + i];
      const double* wrow = wv.data().data() + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += xi * wrow[j];
    }
  }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return x.tape().record(std::move(out), inputs, [x, w, b, rows, in, out_dim](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& xv = x.value();
    const DenseArray& wv = w.value();
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data().data() + r * out_dim;
        for (std::size_t i = 0; i < in; ++i) {
          const double* wrow = wv.data().data() + i * out_dim;
          double acc = 0.0;
          for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * wrow[j];
          gx[r * in + i] += acc;
        }
      }
    });
    accumulate_into(tape, w, [&](DenseArray& gw) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data().data() + r * out_dim;
        for (std::size_t i = 0; i < in; ++i) {
          const double xi = xv[r * in + i];
          double* gwrow = gw.data().data() + i * out_dim;
          for (std::size_t j = 0; j < out_dim; ++j) gwrow[j] += xi * gr[j];
        }
      }
    });
    if (b) {
      accumulate_into(tape, *b, [&](DenseArray& gb) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
      });
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.extent(0) != bv.extent(0)) {
    throw ShapeError("bmm: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  const std::size_t batch = av.extent(0), m = av.extent(1), k = av.extent(2);
  const std::size_t n = transpose_b ? bv.extent(1) : bv.extent(2);
  if ((transpose_b ? bv.extent(2) : bv.extent(1)) != k) {
    throw ShapeError("bmm: inner extent mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  // b element (p, q) of the logical [K, N] operand.
  auto b_index = [=](std::size_t bi, std::size_t p, std::size_t q) {
    return transpose_b ? (bi * n + q) * k + p : (bi * k + p) * n + q;
  };
  DenseArray out(Shape{batch, m, n});
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[(bi * m + i) * k + p];
        for (std::size_t j = 0; j < n; ++j) out[(bi * m + i) * n + j] += aip * bv[b_index(bi, p, j)];
      }
  return a.tape().record(std::move(out), {a, b}, [a, b, batch, m, k, n, b_index](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& av = a.value();
    const DenseArray& bv = b.value();
    accumulate_into(tape, a, [&](DenseArray& ga) {
      for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[(bi * m + i) * n + j] * bv[b_index(bi, p, j)];
            ga[(bi * m + i) * k + p] += acc;
          }
    });
    accumulate_into(tape, b, [&](DenseArray& gb) {
      for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[(bi * m + i) * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[b_index(bi, p, j)] += aip * g[(bi * m + i) * n + j];
          }
    });
  });
}

// ---------------------------------------------------------------------------
// Normalization

Var softmax_lastdim(Var x) {
  DenseArray y = softmax_lastdim(x.value());
  const std::size_t n = y.shape().back();
  return x.tape().record(std::move(y), {x}, [x, n](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& yv = tape.value(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      const std::size_t rows = yv.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * yv[r * n + i];
        for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += yv[r * n + i] * (g[r * n + i] - dot);
      }
    });
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  DenseArray y = layer_norm(x.value(), gain.value(), bias.value(), eps);
  const std::size_t n = x.shape().back();
  return x.tape().record(std::move(y), {x, gain, bias}, [x, gain, bias, n, eps](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    const DenseArray& xv = x.value();
    const DenseArray& gv = gain.value();
    const std::size_t rows = xv.size() / n;
    const bool need_x = tape.requires_grad(x.id());
    const bool need_gain = tape.requires_grad(gain.id());
    const bool need_bias = tape.requires_grad(bias.id());
    std::vector<double> xhat(n), gxhat(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = xv.data().data() + r * n;
      const double* gr = g.data().data() + r * n;
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += in[i];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (in[i] - mean) * (in[i] - mean);
      var /= static_cast<double>(n);
      const double rstd = 1.0 / std::sqrt(var + eps);
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        xhat[i] = (in[i] - mean) * rstd;
        gxhat[i] = gr[i] * gv[i];
        sum_g += gxhat[i];
        sum_gx += gxhat[i] * xhat[i];
      }
      if (need_x) {
        DenseArray& gx = tape.grad_accumulator(x.id());
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          gx[r * n + i] += rstd * (gxhat[i] - inv_n * sum_g - xhat[i] * inv_n * sum_gx);
        }
      }
      if (need_gain) {
        DenseArray& gg = tape.grad_accumulator(gain.id());
        for (std::size_t i = 0; i < n; ++i) gg[i] += gr[i] * xhat[i];
      }
      if (need_bias) {
        DenseArray& gb = tape.grad_accumulator(bias.id());
        for (std::size_t i = 0; i < n; ++i) gb[i] += gr[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

Var reshape(Var x, Shape shape) {
  DenseArray y = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(y), {x}, [x](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Var permute(Var x, const std::vector<std::size_t>& perm) {
  const DenseArray& xv = x.value();
  const std::size_t rank = xv.rank();
  if (perm.size() != rank) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * xv.extent(i);
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);  // input stride for each output axis
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = xv.extent(perm[i]);
    step[i] = in_strides[perm[i]];
  }
  // source[j] = input offset of output element j.
  std::vector<std::size_t> source(xv.size());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < source.size(); ++j) {
    source[j] = src;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      src += step[axis];
      if (counter[axis] < out_shape[axis]) break;
      src -= step[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  DenseArray out(out_shape);
  for (std::size_t j = 0; j < source.size(); ++j) out[j] = xv[source[j]];
  return x.tape().record(std::move(out), {x}, [x, source = std::move(source)](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t j = 0; j < source.size(); ++j) gx[source[j]] += g[j];
    });
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && (s.size() != first.size() || s[i] != first[i])) {
        throw ShapeError("concat: " + shape_string(s) + " incompatible with " + shape_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_at(out_shape, axis);
  DenseArray out(out_shape);
  std::vector<std::size_t> offsets;  // start along axis for each part
  std::size_t start = 0;
  for (const Var& p : parts) {
    offsets.push_back(start);
    const AxisSplit s = split_at(p.shape(), axis);
    const DenseArray& pv = p.value();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t a = 0; a < s.axis; ++a)
        for (std::size_t i = 0; i < s.inner; ++i)
          out[(o * whole.axis + start + a) * whole.inner + i] = pv[(o * s.axis + a) * s.inner + i];
    start += s.axis;
  }
  return parts.front().tape().record(
      std::move(out), parts, [parts, offsets, axis, whole](Tape& tape, std::size_t self) {
        const DenseArray& g = tape.grad(self);
        for (std::size_t k = 0; k < parts.size(); ++k) {
          const AxisSplit s = split_at(parts[k].shape(), axis);
          accumulate_into(tape, parts[k], [&](DenseArray& gp) {
            for (std::size_t o = 0; o < s.outer; ++o)
              for (std::size_t a = 0; a < s.axis; ++a)
                for (std::size_t i = 0; i < s.inner; ++i)
                  gp[(o * s.axis + a) * s.inner + i] += g[(o * whole.axis + offsets[k] + a) * whole.inner + i];
          });
        }
      });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (begin > end || end > s.axis) throw ShapeError("slice: range out of bounds");
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  DenseArray out(out_shape);
  const DenseArray& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < len; ++a)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[(o * len + a) * s.inner + i] = xv[(o * s.axis + begin + a) * s.inner + i];
  return x.tape().record(std::move(out), {x}, [x, s, begin, len](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < len; ++a)
          for (std::size_t i = 0; i < s.inner; ++i)
            gx[(o * s.axis + begin + a) * s.inner + i] += g[(o * len + a) * s.inner + i];
    });
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const AxisSplit s = split_at(x.shape(), 0);
  for (std::size_t r : rows) {
    if (r >= s.axis) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range");
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  DenseArray out(out_shape);
  const DenseArray& xv = x.value();
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(xv.data().begin() + rows[k] * s.inner, s.inner, out.data().begin() + k * s.inner);
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return x.tape().record(std::move(out), {x}, [x, picked, inner = s.inner](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t k = 0; k < picked.size(); ++k)
        for (std::size_t i = 0; i < inner; ++i) gx[picked[k] * inner + i] += g[k * inner + i];
    });
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var mean_axis(Var x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.axis == 0) throw ShapeError("mean_axis: empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  DenseArray out(out_shape);
  const DenseArray& xv = x.value();
  const double inv = 1.0 / static_cast<double>(s.axis);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < s.axis; ++a) acc += xv[(o * s.axis + a) * s.inner + i];
      out[o * s.inner + i] = acc * inv;
    }
  return x.tape().record(std::move(out), {x}, [x, s, inv](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t a = 0; a < s.axis; ++a)
          for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.axis + a) * s.inner + i] += g[o * s.inner + i] * inv;
    });
  });
}

Var max_axis(Var x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.axis == 0) throw ShapeError("max_axis: empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  DenseArray out(out_shape);
  std::vector<std::size_t> winner(out.size());
  const DenseArray& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.axis * s.inner + i;
      for (std::size_t a = 1; a < s.axis; ++a) {
        const std::size_t idx = (o * s.axis + a) * s.inner + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      winner[o * s.inner + i] = best;
      out[o * s.inner + i] = xv[best];
    }
  return x.tape().record(std::move(out), {x}, [x, winner = std::move(winner)](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (std::size_t j = 0; j < winner.size(); ++j) gx[winner[j]] += g[j];
    });
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(DenseArray::scalar(total), {x}, [x](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    accumulate_into(tape, x, [&](DenseArray& gx) {
      for (double& v : gx.data()) v += g;
    });
  });
}

Var bce_with_logits(Var logits, const DenseArray& targets, const DenseArray* mask) {
  const double loss = bce_with_logits(logits.value(), targets, mask);
  std::size_t count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) count += (!mask || (*mask)[i] != 0.0) ? 1 : 0;
  std::optional<DenseArray> mask_copy;
  if (mask) mask_copy = *mask;
  return logits.tape().record(
      DenseArray::scalar(loss), {logits},
      [logits, targets, mask_copy = std::move(mask_copy), count](Tape& tape, std::size_t self) {
        if (count == 0) return;
        const double g = tape.grad(self)[0] / static_cast<double>(count);
        const DenseArray& z = logits.value();
        accumulate_into(tape, logits, [&](DenseArray& gz) {
          for (std::size_t i = 0; i < z.size(); ++i) {
            if (mask_copy && (*mask_copy)[i] == 0.0) continue;
            gz[i] += g * (sigmoid(z[i]) - targets[i]);
          }
        });
      });
}

}  // namespace mpt::ops
