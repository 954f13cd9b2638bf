#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vguard/common.hpp"
#include "vguard/nn/gemm.hpp"
#include "vguard/rng.hpp"

namespace vguard::nn {

// Three conv blocks (conv -> ReLU -> batch norm -> 2x2 max pool -> dropout),
// two regularized dense layers and a 3-way softmax, fed by a learnable batch
// norm on the raw 32x32 input.
struct ModelSpec {
  size_t input_hw = 32;
  size_t conv1_filters = 32, conv1_kernel = 4;
  size_t conv2_filters = 64, conv2_kernel = 3;
  size_t conv3_filters = 128, conv3_kernel = 3;
  size_t dense1_units = 128;
  size_t dense2_units = 32;
  size_t num_classes = 3;
  double dropout_conv = 0.25;
  double dropout_dense = 0.4;
  bool block3_dropout = true;
  double l1 = 1e-5, l2 = 1e-4;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  size_t input_size() const { return input_hw * input_hw; }
  size_t flatten_size() const { return conv3_filters * (input_hw / 8) * (input_hw / 8); }
};

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<T>* values = nullptr;
  std::vector<T>* grads = nullptr;  // null for running-statistic buffers
  std::vector<size_t> shape;
};

namespace detail {

template <typename T>
struct Conv2d {
  size_t in_ch = 0, out_ch = 0, kernel = 0, hw = 0;  // square maps, stride 1, same pad
  size_t pad_beg = 0;  // even kernels pad one less at the leading edge
  std::vector<T> w, b, dw, db;  // w: [out_ch][in_ch*k*k]

  void init(size_t in_c, size_t out_c, size_t k, size_t size, Rng& rng) {
    in_ch = in_c;
    out_ch = out_c;
    kernel = k;
    hw = size;
    pad_beg = (k - 1) / 2;
    const size_t fan_in = in_ch * kernel * kernel;
    w.resize(out_ch * fan_in);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<T>(stddev * rng.normal());
    b.assign(out_ch, T(0));
    dw.assign(w.size(), T(0));
    db.assign(out_ch, T(0));
  }

  size_t patch_rows() const { return in_ch * kernel * kernel; }

  void im2col(const T* in, T* col) const {
    const size_t k = kernel, n = hw;
    for (size_t ic = 0; ic < in_ch; ++ic) {
      const T* plane = in + ic * n * n;
      for (size_t ky = 0; ky < k; ++ky) {
        for (size_t kx = 0; kx < k; ++kx) {
          T* row = col + ((ic * k + ky) * k + kx) * n * n;
          for (size_t y = 0; y < n; ++y) {
            const ptrdiff_t sy = static_cast<ptrdiff_t>(y + ky) - static_cast<ptrdiff_t>(pad_beg);
            if (sy < 0 || sy >= static_cast<ptrdiff_t>(n)) {
              for (size_t x = 0; x < n; ++x) row[y * n + x] = T(0);
              continue;
            }
            const T* src = plane + static_cast<size_t>(sy) * n;
            for (size_t x = 0; x < n; ++x) {
              const ptrdiff_t sx = static_cast<ptrdiff_t>(x + kx) - static_cast<ptrdiff_t>(pad_beg);
              row[y * n + x] =
                  (sx >= 0 && sx < static_cast<ptrdiff_t>(n)) ? src[static_cast<size_t>(sx)] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im_add(const T* col, T* din) const {
    const size_t k = kernel, n = hw;
    for (size_t ic = 0; ic < in_ch; ++ic) {
      T* plane = din + ic * n * n;
      for (size_t ky = 0; ky < k; ++ky) {
        for (size_t kx = 0; kx < k; ++kx) {
          const T* row = col + ((ic * k + ky) * k + kx) * n * n;
          for (size_t y = 0; y < n; ++y) {
            const ptrdiff_t sy = static_cast<ptrdiff_t>(y + ky) - static_cast<ptrdiff_t>(pad_beg);
            if (sy < 0 || sy >= static_cast<ptrdiff_t>(n)) continue;
            T* dst = plane + static_cast<size_t>(sy) * n;
            for (size_t x = 0; x < n; ++x) {
              const ptrdiff_t sx = static_cast<ptrdiff_t>(x + kx) - static_cast<ptrdiff_t>(pad_beg);
              if (sx >= 0 && sx < static_cast<ptrdiff_t>(n))
                dst[static_cast<size_t>(sx)] += row[y * n + x];
            }
          }
        }
      }
    }
  }

  // col holds [batch][patch_rows][hw*hw] and persists until backward.
  void forward(const T* in, T* out, size_t batch, std::vector<T>& col) const {
    const size_t rows = patch_rows(), cols = hw * hw;
    col.resize(batch * rows * cols);
#pragma omp parallel for schedule(static)
    for (ptrdiff_t s = 0; s < static_cast<ptrdiff_t>(batch); ++s)
      im2col(in + static_cast<size_t>(s) * in_ch * cols,
             col.data() + static_cast<size_t>(s) * rows * cols);
    for (size_t s = 0; s < batch; ++s) {
      T* out_s = out + s * out_ch * cols;
      gemm_nn(w.data(), col.data() + s * rows * cols, out_s, out_ch, rows, cols, false);
      for (size_t oc = 0; oc < out_ch; ++oc) {
        const T bias = b[oc];
        T* row = out_s + oc * cols;
        for (size_t p = 0; p < cols; ++p) row[p] += bias;
      }
    }
  }

  void backward(const T* dout, T* din, size_t batch, const std::vector<T>& col,
                std::vector<T>& scratch) const {
    const size_t rows = patch_rows(), cols = hw * hw;
    auto* self = const_cast<Conv2d*>(this);
    scratch.resize(rows * cols);
    for (size_t s = 0; s < batch; ++s) {
      const T* dout_s = dout + s * out_ch * cols;
      for (size_t oc = 0; oc < out_ch; ++oc) {
        T acc = T(0);
        const T* row = dout_s + oc * cols;
        for (size_t p = 0; p < cols; ++p) acc += row[p];
        self->db[oc] += acc;
      }
      // dW accumulates dY_s x col_s^T; transpose col_s so the product is an
      // outer-product accumulation.
      transpose(col.data() + s * rows * cols, scratch.data(), rows, cols);
      gemm_nn(dout_s, scratch.data(), self->dw.data(), out_ch, cols, rows, true);
    }
    if (din != nullptr) {
      for (size_t s = 0; s < batch; ++s) {
        gemm_tn(w.data(), dout + s * out_ch * cols, scratch.data(), rows, out_ch, cols, false);
        T* din_s = din + s * in_ch * cols;
        for (size_t i = 0; i < in_ch * cols; ++i) din_s[i] = T(0);
        col2im_add(scratch.data(), din_s);
      }
    }
  }
};

template <typename T>
struct BatchNorm {
  size_t channels = 0, spatial = 0;  // spatial = H*W (1 for dense inputs)
  double momentum = 0.1, epsilon = 1e-5;
  std::vector<T> gamma, beta, dgamma, dbeta;
  std::vector<T> run_mean, run_var;
  // saved for backward
  std::vector<T> xhat;
  std::vector<double> inv_std;

  void init(size_t c, size_t sp, double mom, double eps) {
    channels = c;
    spatial = sp;
    momentum = mom;
    epsilon = eps;
    gamma.assign(c, T(1));
    beta.assign(c, T(0));
    dgamma.assign(c, T(0));
    dbeta.assign(c, T(0));
    run_mean.assign(c, T(0));
    run_var.assign(c, T(1));
  }

  void forward(const T* in, T* out, size_t batch, bool training) {
    const size_t plane = spatial;
    const double n = static_cast<double>(batch * plane);
    if (training) {
      xhat.resize(batch * channels * plane);
      inv_std.resize(channels);
    }
#pragma omp parallel for schedule(static)
    for (ptrdiff_t ci = 0; ci < static_cast<ptrdiff_t>(channels); ++ci) {
      const auto c = static_cast<size_t>(ci);
      double mean, var;
      if (training) {
        double sum = 0.0, sum_sq = 0.0;
        for (size_t s = 0; s < batch; ++s) {
          const T* src = in + (s * channels + c) * plane;
          for (size_t p = 0; p < plane; ++p) {
            const double v = static_cast<double>(src[p]);
            sum += v;
            sum_sq += v * v;
          }
        }
        mean = sum / n;
        var = std::max(0.0, sum_sq / n - mean * mean);
        run_mean[c] = static_cast<T>((1.0 - momentum) * run_mean[c] + momentum * mean);
        run_var[c] = static_cast<T>((1.0 - momentum) * run_var[c] + momentum * var);
        inv_std[c] = 1.0 / std::sqrt(var + epsilon);
      } else {
        mean = run_mean[c];
        var = run_var[c];
      }
      const double is = 1.0 / std::sqrt(var + epsilon);
      const double g = gamma[c], bt = beta[c];
      for (size_t s = 0; s < batch; ++s) {
        const T* src = in + (s * channels + c) * plane;
        T* dst = out + (s * channels + c) * plane;
        T* xh = training ? xhat.data() + (s * channels + c) * plane : nullptr;
        for (size_t p = 0; p < plane; ++p) {
          const double v = (static_cast<double>(src[p]) - mean) * is;
          if (training) xh[p] = static_cast<T>(v);
          dst[p] = static_cast<T>(g * v + bt);
        }
      }
    }
  }

  void backward(const T* dout, T* din, size_t batch) {
    const size_t plane = spatial;
    const double n = static_cast<double>(batch * plane);
#pragma omp parallel for schedule(static)
    for (ptrdiff_t ci = 0; ci < static_cast<ptrdiff_t>(channels); ++ci) {
      const auto c = static_cast<size_t>(ci);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (size_t s = 0; s < batch; ++s) {
        const T* dy = dout + (s * channels + c) * plane;
        const T* xh = xhat.data() + (s * channels + c) * plane;
        for (size_t p = 0; p < plane; ++p) {
          sum_dy += dy[p];
          sum_dy_xhat += static_cast<double>(dy[p]) * xh[p];
        }
      }
      dbeta[c] += static_cast<T>(sum_dy);
      dgamma[c] += static_cast<T>(sum_dy_xhat);
      const double g_is_n = static_cast<double>(gamma[c]) * inv_std[c] / n;
      for (size_t s = 0; s < batch; ++s) {
        const T* dy = dout + (s * channels + c) * plane;
        const T* xh = xhat.data() + (s * channels + c) * plane;
        T* dx = din + (s * channels + c) * plane;
        for (size_t p = 0; p < plane; ++p)
          dx[p] = static_cast<T>(g_is_n * (n * dy[p] - sum_dy - xh[p] * sum_dy_xhat));
      }
    }
  }
};

template <typename T>
struct Dense {
  size_t in_dim = 0, out_dim = 0;
  std::vector<T> w, b, dw, db;  // w: [out][in]

  void init(size_t in_d, size_t out_d, Rng& rng) {
    in_dim = in_d;
    out_dim = out_d;
    w.resize(in_dim * out_dim);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& v : w) v = static_cast<T>(stddev * rng.normal());
    b.assign(out_dim, T(0));
    dw.assign(w.size(), T(0));
    db.assign(out_dim, T(0));
  }

  void forward(const T* in, T* out, size_t batch, std::vector<T>& wt_scratch) const {
    wt_scratch.resize(w.size());
    transpose(w.data(), wt_scratch.data(), out_dim, in_dim);  // -> [in][out]
    gemm_nn(in, wt_scratch.data(), out, batch, in_dim, out_dim, false);
    for (size_t s = 0; s < batch; ++s) {
      T* row = out + s * out_dim;
      for (size_t o = 0; o < out_dim; ++o) row[o] += b[o];
    }
  }

  void backward(const T* in, const T* dout, T* din, size_t batch) {
    gemm_tn(dout, in, dw.data(), out_dim, batch, in_dim, true);
    for (size_t s = 0; s < batch; ++s) {
      const T* dy = dout + s * out_dim;
      for (size_t o = 0; o < out_dim; ++o) db[o] += dy[o];
    }
    if (din != nullptr) gemm_nn(dout, w.data(), din, batch, out_dim, in_dim, false);
  }
};

template <typename T>
inline void relu_forward(const T* in, T* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i)
    out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
inline void relu_backward(const T* out, const T* dout, T* din, size_t n) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i)
    din[i] = out[i] > T(0) ? dout[i] : T(0);
}

template <typename T>
struct MaxPool2 {
  size_t channels = 0, in_hw = 0;
  std::vector<size_t> argmax;  // per output element: linear index into the input

  size_t out_hw() const { return in_hw / 2; }

  void forward(const T* in, T* out, size_t batch) {
    const size_t oh = out_hw();
    argmax.resize(batch * channels * oh * oh);
#pragma omp parallel for schedule(static)
    for (ptrdiff_t s = 0; s < static_cast<ptrdiff_t>(batch); ++s) {
      for (size_t c = 0; c < channels; ++c) {
        const size_t in_base = (static_cast<size_t>(s) * channels + c) * in_hw * in_hw;
        const size_t out_base = (static_cast<size_t>(s) * channels + c) * oh * oh;
        for (size_t y = 0; y < oh; ++y) {
          for (size_t x = 0; x < oh; ++x) {
            size_t best = in_base + (2 * y) * in_hw + 2 * x;
            for (size_t dy = 0; dy < 2; ++dy)
              for (size_t dx = 0; dx < 2; ++dx) {
                const size_t idx = in_base + (2 * y + dy) * in_hw + (2 * x + dx);
                if (in[idx] > in[best]) best = idx;
              }
            out[out_base + y * oh + x] = in[best];
            argmax[out_base + y * oh + x] = best;
          }
        }
      }
    }
  }

  void backward(const T* dout, T* din, size_t batch) const {
    const size_t oh = out_hw();
    const size_t n_in = batch * channels * in_hw * in_hw;
    for (size_t i = 0; i < n_in; ++i) din[i] = T(0);
    const size_t n_out = batch * channels * oh * oh;
    for (size_t i = 0; i < n_out; ++i) din[argmax[i]] += dout[i];
  }
};

template <typename T>
struct Dropout {
  double rate = 0.0;
  std::vector<T> mask;

  void forward(const T* in, T* out, size_t n, bool training, Rng* rng) {
    if (!training || rate <= 0.0) {
      if (out != in)
        for (size_t i = 0; i < n; ++i) out[i] = in[i];
      if (training) mask.clear();
      return;
    }
    if (rng == nullptr) throw Error("dropout: active rate requires an RNG");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    mask.resize(n);
    for (size_t i = 0; i < n; ++i) mask[i] = rng->uniform() >= rate ? keep_scale : T(0);
    for (size_t i = 0; i < n; ++i) out[i] = in[i] * mask[i];
  }

  void backward(const T* dout, T* din, size_t n) const {
    if (mask.empty()) {
      if (din != dout)
        for (size_t i = 0; i < n; ++i) din[i] = dout[i];
      return;
    }
    for (size_t i = 0; i < n; ++i) din[i] = dout[i] * mask[i];
  }
};

}  // namespace detail

template <typename T>
class Model {
 public:
  Model() = default;

  Model(const ModelSpec& spec, uint64_t init_seed) : spec_(spec), ready_(true) {
    const size_t hw = spec.input_hw;
    auto rng = Rng::derive(init_seed, {rng_stream::kModelInit});
    bn_in_.init(1, hw * hw, spec.bn_momentum, spec.bn_epsilon);
    conv1_.init(1, spec.conv1_filters, spec.conv1_kernel, hw, rng);
    bn1_.init(spec.conv1_filters, hw * hw, spec.bn_momentum, spec.bn_epsilon);
    pool1_.channels = spec.conv1_filters;
    pool1_.in_hw = hw;
    conv2_.init(spec.conv1_filters, spec.conv2_filters, spec.conv2_kernel, hw / 2, rng);
    bn2_.init(spec.conv2_filters, (hw / 2) * (hw / 2), spec.bn_momentum, spec.bn_epsilon);
    pool2_.channels = spec.conv2_filters;
    pool2_.in_hw = hw / 2;
    conv3_.init(spec.conv2_filters, spec.conv3_filters, spec.conv3_kernel, hw / 4, rng);
    bn3_.init(spec.conv3_filters, (hw / 4) * (hw / 4), spec.bn_momentum, spec.bn_epsilon);
    pool3_.channels = spec.conv3_filters;
    pool3_.in_hw = hw / 4;
    dense1_.init(spec.flatten_size(), spec.dense1_units, rng);
    dense2_.init(spec.dense1_units, spec.dense2_units, rng);
    dense3_.init(spec.dense2_units, spec.num_classes, rng);
    drop1_.rate = drop2_.rate = spec.dropout_conv;
    drop3_.rate = spec.block3_dropout ? spec.dropout_conv : 0.0;
    drop_fc1_.rate = drop_fc2_.rate = spec.dropout_dense;
  }

  bool ready() const { return ready_; }
  const ModelSpec& spec() const { return spec_; }

  const std::vector<T>& forward(const T* x, size_t batch, bool training, Rng* dropout_rng = nullptr) {
    require_ready();
    const size_t hw = spec_.input_hw;
    const size_t hw2 = hw / 2, hw4 = hw / 4, hw8 = hw / 8;
    const size_t c1 = spec_.conv1_filters, c2 = spec_.conv2_filters, c3 = spec_.conv3_filters;

    a_.x0.assign(x, x + batch * hw * hw);
    a_.bn_in.resize(batch * hw * hw);
    bn_in_.forward(a_.x0.data(), a_.bn_in.data(), batch, training);

    a_.c1.resize(batch * c1 * hw * hw);
    conv1_.forward(a_.bn_in.data(), a_.c1.data(), batch, a_.col1);
    a_.r1.resize(a_.c1.size());
    detail::relu_forward(a_.c1.data(), a_.r1.data(), a_.r1.size());
    a_.b1.resize(a_.r1.size());
    bn1_.forward(a_.r1.data(), a_.b1.data(), batch, training);
    a_.p1.resize(batch * c1 * hw2 * hw2);
    pool1_.forward(a_.b1.data(), a_.p1.data(), batch);
    a_.d1.resize(a_.p1.size());
    drop1_.forward(a_.p1.data(), a_.d1.data(), a_.p1.size(), training, dropout_rng);

    a_.c2.resize(batch * c2 * hw2 * hw2);
    conv2_.forward(a_.d1.data(), a_.c2.data(), batch, a_.col2);
    a_.r2.resize(a_.c2.size());
    detail::relu_forward(a_.c2.data(), a_.r2.data(), a_.r2.size());
    a_.b2.resize(a_.r2.size());
    bn2_.forward(a_.r2.data(), a_.b2.data(), batch, training);
    a_.p2.resize(batch * c2 * hw4 * hw4);
    pool2_.forward(a_.b2.data(), a_.p2.data(), batch);
    a_.d2.resize(a_.p2.size());
    drop2_.forward(a_.p2.data(), a_.d2.data(), a_.p2.size(), training, dropout_rng);

    a_.c3.resize(batch * c3 * hw4 * hw4);
    conv3_.forward(a_.d2.data(), a_.c3.data(), batch, a_.col3);
    a_.r3.resize(a_.c3.size());
    detail::relu_forward(a_.c3.data(), a_.r3.data(), a_.r3.size());
    a_.b3.resize(a_.r3.size());
    bn3_.forward(a_.r3.data(), a_.b3.data(), batch, training);
    a_.p3.resize(batch * c3 * hw8 * hw8);
    pool3_.forward(a_.b3.data(), a_.p3.data(), batch);
    a_.d3.resize(a_.p3.size());
    drop3_.forward(a_.p3.data(), a_.d3.data(), a_.p3.size(), training, dropout_rng);

    // d3 is already the flattened [batch][2048] view
    a_.f1.resize(batch * spec_.dense1_units);
    dense1_.forward(a_.d3.data(), a_.f1.data(), batch, g_.wt_scratch);
    a_.f1r.resize(a_.f1.size());
    detail::relu_forward(a_.f1.data(), a_.f1r.data(), a_.f1.size());
    a_.f1d.resize(a_.f1r.size());
    drop_fc1_.forward(a_.f1r.data(), a_.f1d.data(), a_.f1r.size(), training, dropout_rng);

    a_.f2.resize(batch * spec_.dense2_units);
    dense2_.forward(a_.f1d.data(), a_.f2.data(), batch, g_.wt_scratch);
    a_.f2r.resize(a_.f2.size());
    detail::relu_forward(a_.f2.data(), a_.f2r.data(), a_.f2.size());
    a_.f2d.resize(a_.f2r.size());
    drop_fc2_.forward(a_.f2r.data(), a_.f2d.data(), a_.f2r.size(), training, dropout_rng);

    a_.logits.resize(batch * spec_.num_classes);
    dense3_.forward(a_.f2d.data(), a_.logits.data(), batch, g_.wt_scratch);

    a_.probs.resize(a_.logits.size());
    for (size_t s = 0; s < batch; ++s) {
      const T* row = a_.logits.data() + s * spec_.num_classes;
      T* p = a_.probs.data() + s * spec_.num_classes;
      T mx = row[0];
      for (size_t c = 1; c < spec_.num_classes; ++c) mx = std::max(mx, row[c]);
      double sum = 0.0;
      for (size_t c = 0; c < spec_.num_classes; ++c) {
        const double e = std::exp(static_cast<double>(row[c] - mx));
        p[c] = static_cast<T>(e);
        sum += e;
      }
      const T inv = static_cast<T>(1.0 / sum);
      for (size_t c = 0; c < spec_.num_classes; ++c) p[c] *= inv;
    }
    return a_.probs;
  }

  double loss_value(const T* x, const T* y, size_t batch, bool training = true) {
    const auto& probs = forward(x, batch, training, nullptr);
    return cross_entropy(probs.data(), y, batch) + regularizer();
  }

  double loss_and_gradients(const T* x, const T* y, size_t batch, Rng* dropout_rng = nullptr) {
    const auto& probs = forward(x, batch, true, dropout_rng);
    const double loss = cross_entropy(probs.data(), y, batch) + regularizer();

    g_.dlogits.resize(batch * spec_.num_classes);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (size_t i = 0; i < g_.dlogits.size(); ++i)
      g_.dlogits[i] = static_cast<T>((static_cast<double>(probs[i]) - y[i]) * inv_batch);

    g_.df2d.resize(a_.f2d.size());
    dense3_.backward(a_.f2d.data(), g_.dlogits.data(), g_.df2d.data(), batch);
    g_.df2r.resize(a_.f2r.size());
    drop_fc2_.backward(g_.df2d.data(), g_.df2r.data(), g_.df2r.size());
    g_.df2.resize(a_.f2.size());
    detail::relu_backward(a_.f2r.data(), g_.df2r.data(), g_.df2.data(), g_.df2.size());

    g_.df1d.resize(a_.f1d.size());
    dense2_.backward(a_.f1d.data(), g_.df2.data(), g_.df1d.data(), batch);
    g_.df1r.resize(a_.f1r.size());
    drop_fc1_.backward(g_.df1d.data(), g_.df1r.data(), g_.df1r.size());
    g_.df1.resize(a_.f1.size());
    detail::relu_backward(a_.f1r.data(), g_.df1r.data(), g_.df1.data(), g_.df1.size());

    g_.dd3.resize(a_.d3.size());
    dense1_.backward(a_.d3.data(), g_.df1.data(), g_.dd3.data(), batch);

    // dense regularizer gradients
    add_regularizer_grads(dense1_);
    add_regularizer_grads(dense2_);

    g_.dp3.resize(a_.p3.size());
    drop3_.backward(g_.dd3.data(), g_.dp3.data(), g_.dp3.size());
    g_.db3.resize(a_.b3.size());
    pool3_.backward(g_.dp3.data(), g_.db3.data(), batch);
    g_.dr3.resize(a_.r3.size());
    bn3_.backward(g_.db3.data(), g_.dr3.data(), batch);
    g_.dc3.resize(a_.c3.size());
    detail::relu_backward(a_.r3.data(), g_.dr3.data(), g_.dc3.data(), g_.dc3.size());
    g_.dd2.resize(a_.d2.size());
    conv3_.backward(g_.dc3.data(), g_.dd2.data(), batch, a_.col3, g_.dcol);

    g_.dp2.resize(a_.p2.size());
    drop2_.backward(g_.dd2.data(), g_.dp2.data(), g_.dp2.size());
    g_.db2.resize(a_.b2.size());
    pool2_.backward(g_.dp2.data(), g_.db2.data(), batch);
    g_.dr2.resize(a_.r2.size());
    bn2_.backward(g_.db2.data(), g_.dr2.data(), batch);
    g_.dc2.resize(a_.c2.size());
    detail::relu_backward(a_.r2.data(), g_.dr2.data(), g_.dc2.data(), g_.dc2.size());
    g_.dd1.resize(a_.d1.size());
    conv2_.backward(g_.dc2.data(), g_.dd1.data(), batch, a_.col2, g_.dcol);

    g_.dp1.resize(a_.p1.size());
    drop1_.backward(g_.dd1.data(), g_.dp1.data(), g_.dp1.size());
    g_.db1.resize(a_.b1.size());
    pool1_.backward(g_.dp1.data(), g_.db1.data(), batch);
    g_.dr1.resize(a_.r1.size());
    bn1_.backward(g_.db1.data(), g_.dr1.data(), batch);
    g_.dc1.resize(a_.c1.size());
    detail::relu_backward(a_.r1.data(), g_.dr1.data(), g_.dc1.data(), g_.dc1.size());
    g_.dbn_in.resize(a_.bn_in.size());
    conv1_.backward(g_.dc1.data(), g_.dbn_in.data(), batch, a_.col1, g_.dcol);

    g_.dx0.resize(a_.x0.size());
    bn_in_.backward(g_.dbn_in.data(), g_.dx0.data(), batch);
    return loss;
  }

  void zero_gradients() {
    for (auto& p : parameters())
      if (p.grads) std::fill(p.grads->begin(), p.grads->end(), T(0));
  }

  std::vector<ParamTensor<T>> parameters() {
    require_ready();
    const size_t k1 = spec_.conv1_kernel, k2 = spec_.conv2_kernel, k3 = spec_.conv3_kernel;
    return {
        {"bn_in.gamma", &bn_in_.gamma, &bn_in_.dgamma, {1}},
        {"bn_in.beta", &bn_in_.beta, &bn_in_.dbeta, {1}},
        {"conv1.w", &conv1_.w, &conv1_.dw, {spec_.conv1_filters, 1, k1, k1}},
        {"conv1.b", &conv1_.b, &conv1_.db, {spec_.conv1_filters}},
        {"bn1.gamma", &bn1_.gamma, &bn1_.dgamma, {spec_.conv1_filters}},
        {"bn1.beta", &bn1_.beta, &bn1_.dbeta, {spec_.conv1_filters}},
        {"conv2.w", &conv2_.w, &conv2_.dw, {spec_.conv2_filters, spec_.conv1_filters, k2, k2}},
        {"conv2.b", &conv2_.b, &conv2_.db, {spec_.conv2_filters}},
        {"bn2.gamma", &bn2_.gamma, &bn2_.dgamma, {spec_.conv2_filters}},
        {"bn2.beta", &bn2_.beta, &bn2_.dbeta, {spec_.conv2_filters}},
        {"conv3.w", &conv3_.w, &conv3_.dw, {spec_.conv3_filters, spec_.conv2_filters, k3, k3}},
        {"conv3.b", &conv3_.b, &conv3_.db, {spec_.conv3_filters}},
        {"bn3.gamma", &bn3_.gamma, &bn3_.dgamma, {spec_.conv3_filters}},
        {"bn3.beta", &bn3_.beta, &bn3_.dbeta, {spec_.conv3_filters}},
        {"dense1.w", &dense1_.w, &dense1_.dw, {spec_.dense1_units, spec_.flatten_size()}},
        {"dense1.b", &dense1_.b, &dense1_.db, {spec_.dense1_units}},
        {"dense2.w", &dense2_.w, &dense2_.dw, {spec_.dense2_units, spec_.dense1_units}},
        {"dense2.b", &dense2_.b, &dense2_.db, {spec_.dense2_units}},
        {"dense3.w", &dense3_.w, &dense3_.dw, {spec_.num_classes, spec_.dense2_units}},
        {"dense3.b", &dense3_.b, &dense3_.db, {spec_.num_classes}},
    };
  }

  std::vector<ParamTensor<T>> buffers() {
    require_ready();
    return {
        {"bn_in.run_mean", &bn_in_.run_mean, nullptr, {1}},
        {"bn_in.run_var", &bn_in_.run_var, nullptr, {1}},
        {"bn1.run_mean", &bn1_.run_mean, nullptr, {spec_.conv1_filters}},
        {"bn1.run_var", &bn1_.run_var, nullptr, {spec_.conv1_filters}},
        {"bn2.run_mean", &bn2_.run_mean, nullptr, {spec_.conv2_filters}},
        {"bn2.run_var", &bn2_.run_var, nullptr, {spec_.conv2_filters}},
        {"bn3.run_mean", &bn3_.run_mean, nullptr, {spec_.conv3_filters}},
        {"bn3.run_var", &bn3_.run_var, nullptr, {spec_.conv3_filters}},
    };
  }

  // Post-stage activation sizes of the last forward, for shape checks.
  std::vector<std::pair<std::string, size_t>> last_activation_sizes() const {
    return {{"bn_in", a_.bn_in.size()}, {"conv1", a_.c1.size()},  {"pool1", a_.p1.size()},
            {"conv2", a_.c2.size()},    {"pool2", a_.p2.size()},  {"conv3", a_.c3.size()},
            {"pool3", a_.p3.size()},    {"flatten", a_.d3.size()}, {"dense1", a_.f1.size()},
            {"dense2", a_.f2.size()},   {"output", a_.probs.size()}};
  }

 private:
  void require_ready() const {
    if (!ready_) throw Error("model: parameters are uninitialized");
  }

  double cross_entropy(const T* probs, const T* y, size_t batch) const {
    double loss = 0.0;
    for (size_t i = 0; i < batch * spec_.num_classes; ++i)
      if (y[i] != T(0))
        loss -= static_cast<double>(y[i]) *
                std::log(std::max(static_cast<double>(probs[i]), 1e-300));
    return loss / static_cast<double>(batch);
  }

  double regularizer() const {
    if (spec_.l1 == 0.0 && spec_.l2 == 0.0) return 0.0;
    double l1_term = 0.0, l2_term = 0.0;
    for (const auto* d : {&dense1_, &dense2_}) {
      for (const T v : d->w) {
        l1_term += std::abs(static_cast<double>(v));
        l2_term += static_cast<double>(v) * v;
      }
    }
    return spec_.l1 * l1_term + spec_.l2 * l2_term;
  }

  void add_regularizer_grads(detail::Dense<T>& d) {
    if (spec_.l1 == 0.0 && spec_.l2 == 0.0) return;
    for (size_t i = 0; i < d.w.size(); ++i) {
      const double v = d.w[i];
      double g = 2.0 * spec_.l2 * v;
      if (v > 0) g += spec_.l1;
      else if (v < 0) g -= spec_.l1;
      d.dw[i] += static_cast<T>(g);
    }
  }

  struct Activations {
    std::vector<T> x0, bn_in;
    std::vector<T> c1, r1, b1, p1, d1, col1;
    std::vector<T> c2, r2, b2, p2, d2, col2;
    std::vector<T> c3, r3, b3, p3, d3, col3;
    std::vector<T> f1, f1r, f1d, f2, f2r, f2d, logits, probs;
  };
  struct Gradients {
    std::vector<T> dlogits, df2d, df2r, df2, df1d, df1r, df1, dd3;
    std::vector<T> dp3, db3, dr3, dc3, dd2, dp2, db2, dr2, dc2, dd1, dp1, db1, dr1, dc1;
    std::vector<T> dbn_in, dx0, dcol, wt_scratch;
  };

  ModelSpec spec_;
  bool ready_ = false;

  detail::BatchNorm<T> bn_in_, bn1_, bn2_, bn3_;
  detail::Conv2d<T> conv1_, conv2_, conv3_;
  detail::MaxPool2<T> pool1_, pool2_, pool3_;
  detail::Dropout<T> drop1_, drop2_, drop3_, drop_fc1_, drop_fc2_;
  detail::Dense<T> dense1_, dense2_, dense3_;

  Activations a_;
  Gradients g_;
};

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(std::vector<ParamTensor<T>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].values->size(), 0.0);
        v_[i].assign(params[i].values->size(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& values = *params[i].values;
      const auto& grads = *params[i].grads;
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < values.size(); ++j) {
        const double g = grads[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        values[j] = static_cast<T>(values[j] - lr_ * mhat / (std::sqrt(vhat) + epsilon_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;  // moments kept in double for either T
};

}  // namespace vguard::nn
