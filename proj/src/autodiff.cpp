#include "cmpnet/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmpnet {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMajor<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMajor<T>>;

// Unfolds one CHW image into a (C*kh*kw) x (H*W) matrix with zero padding
// (kh-1)/2, (kw-1)/2.
template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, T* col) {
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = image + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - ph;
        const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - pw;
        const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, -dj);
        const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(w, w - dj);
        for (std::ptrdiff_t i = 0; i < h; ++i) {
          T* dst = col + i * w;
          const std::ptrdiff_t si = i + di;
          if (si < 0 || si >= h || j_lo >= j_hi) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + si * w + dj;
          std::fill(dst, dst + j_lo, T(0));
          std::copy(src + j_lo, src + j_hi, dst + j_lo);
          std::fill(dst + j_hi, dst + w, T(0));
        }
        col += height * width;
      }
    }
  }
}

// Adjoint of im2col: scatters a column matrix back into (accumulates onto)
// a CHW image.
template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t kh, std::size_t kw, T* image) {
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = image + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - ph;
        const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - pw;
        const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, -dj);
        const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(w, w - dj);
        for (std::ptrdiff_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = i + di;
          if (si < 0 || si >= h) continue;
          const T* src = col + i * w;
          T* dst = plane + si * w + dj;
          for (std::ptrdiff_t j = j_lo; j < j_hi; ++j) dst[j] += src[j];
        }
        col += height * width;
      }
    }
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
const Tensor<T>& Tape<T>::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.param != nullptr) return n.param->value;
  if (n.external != nullptr) return *n.external;
  return n.value;
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  node(v);
  return value_of(v.id);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  return node(v).grad;
}

template <typename T>
OpKind Tape<T>::kind(Var v) const {
  return node(v).kind;
}

template <typename T>
Var Tape<T>::push(Node n) {
  for (std::size_t in : n.inputs) {
    if (in != Var::kInvalid && nodes_[in].requires_grad) n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::constant_ref(const Tensor<T>& value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.external = &value;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& param) {
  Node n;
  n.kind = OpKind::kParameter;
  n.param = &param;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::conv2d(Var input, Var weight, Var bias) {
  const Tensor<T>& x = value(input);
  const Tensor<T>& wt = value(weight);
  const Tensor<T>& b = value(bias);
  const Shape4 xs = x.shape();
  const Shape4 ws = wt.shape();
  if (ws.c != xs.c) {
    throw std::invalid_argument("conv2d channel mismatch: input " + to_string(xs) +
                                " weight " + to_string(ws));
  }
  if (ws.h % 2 == 0 || ws.w % 2 == 0) {
    throw std::invalid_argument("conv2d kernel size must be odd, got " + to_string(ws));
  }
  if (b.numel() != ws.n) throw std::invalid_argument("conv2d bias length mismatch");

  const std::size_t cout = ws.n;
  const std::size_t k = ws.c * ws.h * ws.w;
  const std::size_t p = xs.plane();
  Tensor<T> out(Shape4{xs.n, cout, xs.h, xs.w});
  const bool pointwise = ws.h == 1 && ws.w == 1;
  AlignedVector<T> col(pointwise ? 0 : k * p);
  ConstMatMap<T> wm(wt.data(), cout, k);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* xn = x.data() + n * xs.c * p;
    if (!pointwise) im2col(xn, xs.c, xs.h, xs.w, ws.h, ws.w, col.data());
    ConstMatMap<T> cm(pointwise ? xn : col.data(), k, p);
    MatMap<T> om(out.data() + n * cout * p, cout, p);
    om.noalias() = wm * cm;
    for (std::size_t co = 0; co < cout; ++co) om.row(co).array() += b[co];
  }

  Node node;
  node.kind = OpKind::kConv2d;
  node.inputs = {input.id, weight.id, bias.id};
  node.value = std::move(out);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_conv2d(Node& node) {
  const std::size_t xi = node.inputs[0], wi = node.inputs[1], bi = node.inputs[2];
  const Tensor<T>& x = value_of(xi);
  const Tensor<T>& wt = value_of(wi);
  const Shape4 xs = x.shape();
  const Shape4 ws = wt.shape();
  const std::size_t cout = ws.n;
  const std::size_t k = ws.c * ws.h * ws.w;
  const std::size_t p = xs.plane();
  const bool pointwise = ws.h == 1 && ws.w == 1;
  const bool need_x = nodes_[xi].requires_grad;
  const bool need_w = nodes_[wi].requires_grad;
  const bool need_b = nodes_[bi].requires_grad;

  AlignedVector<T> col((pointwise || !need_w) ? 0 : k * p);
  AlignedVector<T> dcol(pointwise || !need_x ? 0 : k * p);
  ConstMatMap<T> wm(wt.data(), cout, k);
  for (std::size_t n = 0; n < xs.n; ++n) {
    ConstMatMap<T> gy(node.grad.data() + n * cout * p, cout, p);
    const T* xn = x.data() + n * xs.c * p;
    if (need_w) {
      if (!pointwise) im2col(xn, xs.c, xs.h, xs.w, ws.h, ws.w, col.data());
      ConstMatMap<T> cm(pointwise ? xn : col.data(), k, p);
      MatMap<T> gw(nodes_[wi].grad.data(), cout, k);
      gw.noalias() += gy * cm.transpose();
    }
    if (need_b) {
      Tensor<T>& gb = nodes_[bi].grad;
      const T* g = node.grad.data() + n * cout * p;
      for (std::size_t co = 0; co < cout; ++co) {
        T acc = 0;
        for (std::size_t i = 0; i < p; ++i) acc += g[co * p + i];
        gb[co] += acc;
      }
    }
    if (need_x) {
      T* gx = nodes_[xi].grad.data() + n * xs.c * p;
      if (pointwise) {
        MatMap<T> gxm(gx, k, p);
        gxm.noalias() += wm.transpose() * gy;
      } else {
        MatMap<T> dc(dcol.data(), k, p);
        dc.noalias() = wm.transpose() * gy;
        col2im_add(dcol.data(), xs.c, xs.h, xs.w, ws.h, ws.w, gx);
      }
    }
  }
}

template <typename T>
Var Tape<T>::maxpool2(Var input) {
  const Tensor<T>& x = value(input);
  const Shape4 xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw std::invalid_argument("maxpool2 needs even height and width, got " + to_string(xs));
  }
  const std::size_t oh = xs.h / 2, ow = xs.w / 2;
  Tensor<T> out(Shape4{xs.n, xs.c, oh, ow});
  std::vector<std::uint32_t> argmax(out.numel());
  const std::size_t planes = xs.n * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.data() + pl * xs.plane();
    T* dst = out.data() + pl * oh * ow;
    std::uint32_t* arg = argmax.data() + pl * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t base = 2 * i * xs.w + 2 * j;
        const std::size_t cand[4] = {base, base + 1, base + xs.w, base + xs.w + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q) {
          const T v = src[cand[q]];
          if (v > src[best] || (std::isnan(v) && !std::isnan(src[best]))) best = cand[q];
        }
        dst[i * ow + j] = src[best];
        arg[i * ow + j] = static_cast<std::uint32_t>(best);
      }
    }
  }
  Node node;
  node.kind = OpKind::kMaxPool2;
  node.inputs[0] = input.id;
  node.value = std::move(out);
  node.argmax = std::move(argmax);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_maxpool2(Node& node) {
  Node& in = nodes_[node.inputs[0]];
  if (!in.requires_grad) return;
  const Shape4 os = node.value.shape();
  const std::size_t in_plane = os.plane() * 4;
  const std::size_t planes = os.n * os.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    T* gx = in.grad.data() + pl * in_plane;
    const T* gy = node.grad.data() + pl * os.plane();
    const std::uint32_t* arg = node.argmax.data() + pl * os.plane();
    for (std::size_t q = 0; q < os.plane(); ++q) gx[arg[q]] += gy[q];
  }
}

template <typename T>
Var Tape<T>::upsample2(Var input) {
  const Tensor<T>& x = value(input);
  const Shape4 xs = x.shape();
  const std::size_t oh = xs.h * 2, ow = xs.w * 2;
  Tensor<T> out(Shape4{xs.n, xs.c, oh, ow});
  const std::size_t planes = xs.n * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.data() + pl * xs.plane();
    T* dst = out.data() + pl * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T* row = src + (i / 2) * xs.w;
      T* drow = dst + i * ow;
      for (std::size_t j = 0; j < ow; ++j) drow[j] = row[j / 2];
    }
  }
  Node node;
  node.kind = OpKind::kUpsample2;
  node.inputs[0] = input.id;
  node.value = std::move(out);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_upsample2(Node& node) {
  Node& in = nodes_[node.inputs[0]];
  if (!in.requires_grad) return;
  const Shape4 os = node.value.shape();
  const std::size_t ih = os.h / 2, iw = os.w / 2;
  const std::size_t planes = os.n * os.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* gy = node.grad.data() + pl * os.plane();
    T* gx = in.grad.data() + pl * ih * iw;
    for (std::size_t i = 0; i < os.h; ++i) {
      const T* grow = gy + i * os.w;
      T* xrow = gx + (i / 2) * iw;
      for (std::size_t j = 0; j < os.w; ++j) xrow[j / 2] += grow[j];
    }
  }
}

template <typename T>
Var Tape<T>::concat_channels(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  const Shape4 as = av.shape(), bs = bv.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw std::invalid_argument("concat_channels spatial mismatch: " + to_string(as) + " vs " +
                                to_string(bs));
  }
  Tensor<T> out(Shape4{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t a_len = as.c * as.plane(), b_len = bs.c * bs.plane();
  for (std::size_t n = 0; n < as.n; ++n) {
    T* dst = out.data() + n * (a_len + b_len);
    std::copy_n(av.data() + n * a_len, a_len, dst);
    std::copy_n(bv.data() + n * b_len, b_len, dst + a_len);
  }
  Node node;
  node.kind = OpKind::kConcat;
  node.inputs[0] = a.id;
  node.inputs[1] = b.id;
  node.value = std::move(out);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_concat(Node& node) {
  Node& a = nodes_[node.inputs[0]];
  Node& b = nodes_[node.inputs[1]];
  const Shape4 as = value_of(node.inputs[0]).shape();
  const Shape4 bs = value_of(node.inputs[1]).shape();
  const std::size_t a_len = as.c * as.plane(), b_len = bs.c * bs.plane();
  for (std::size_t n = 0; n < as.n; ++n) {
    const T* src = node.grad.data() + n * (a_len + b_len);
    if (a.requires_grad) {
      T* ga = a.grad.data() + n * a_len;
      for (std::size_t i = 0; i < a_len; ++i) ga[i] += src[i];
    }
    if (b.requires_grad) {
      T* gb = b.grad.data() + n * b_len;
      for (std::size_t i = 0; i < b_len; ++i) gb[i] += src[a_len + i];
    }
  }
}

template <typename T>
Var Tape<T>::relu(Var input) {
  const Tensor<T>& x = value(input);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] < T(0) ? T(0) : x[i];  // NaN passes through
  Node node;
  node.kind = OpKind::kRelu;
  node.inputs[0] = input.id;
  node.value = std::move(out);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_relu(Node& node) {
  Node& in = nodes_[node.inputs[0]];
  if (!in.requires_grad) return;
  const Tensor<T>& x = value_of(node.inputs[0]);
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (x[i] > T(0)) in.grad[i] += node.grad[i];
}

template <typename T>
Var Tape<T>::tanh(Var input) {
  const Tensor<T>& x = value(input);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
  Node node;
  node.kind = OpKind::kTanh;
  node.inputs[0] = input.id;
  node.value = std::move(out);
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_tanh(Node& node) {
  Node& in = nodes_[node.inputs[0]];
  if (!in.requires_grad) return;
  for (std::size_t i = 0; i < node.value.numel(); ++i) {
    const T y = node.value[i];
    in.grad[i] += node.grad[i] * (T(1) - y * y);
  }
}

template <typename T>
Var Tape<T>::mse_loss(Var pred, Var target) {
  const Tensor<T>& p = value(pred);
  const Tensor<T>& t = value(target);
  if (!(p.shape() == t.shape())) {
    throw std::invalid_argument("mse_loss shape mismatch: " + to_string(p.shape()) + " vs " +
                                to_string(t.shape()));
  }
  if (p.numel() == 0) throw std::invalid_argument("mse_loss of empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
  }
  Node node;
  node.kind = OpKind::kMse;
  node.inputs[0] = pred.id;
  node.inputs[1] = target.id;
  node.value = Tensor<T>(Shape4{1, 1, 1, 1}, static_cast<T>(sum / static_cast<double>(p.numel())));
  return push(std::move(node));
}

template <typename T>
void Tape<T>::backward_mse(Node& node) {
  const Tensor<T>& p = value_of(node.inputs[0]);
  const Tensor<T>& t = value_of(node.inputs[1]);
  Node& pn = nodes_[node.inputs[0]];
  Node& tn = nodes_[node.inputs[1]];
  const T scale = T(2) * node.grad[0] / static_cast<T>(p.numel());
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const T g = scale * (p[i] - t[i]);
    if (pn.requires_grad) pn.grad[i] += g;
    if (tn.requires_grad) tn.grad[i] -= g;
  }
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
  if (loss.id >= nodes_.size()) throw std::logic_error("backward root is not on this tape");
  if (value_of(loss.id).numel() != 1) throw std::logic_error("backward root must be a scalar");

  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    n.grad = n.requires_grad ? Tensor<T>(value_of(i).shape()) : Tensor<T>();
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad[0] = T(1);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    switch (n.kind) {
      case OpKind::kConstant:
        break;
      case OpKind::kParameter:
        if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
        add_into(n.param->grad, n.grad);
        break;
      case OpKind::kConv2d:
        backward_conv2d(n);
        break;
      case OpKind::kMaxPool2:
        backward_maxpool2(n);
        break;
      case OpKind::kUpsample2:
        backward_upsample2(n);
        break;
      case OpKind::kConcat:
        backward_concat(n);
        break;
      case OpKind::kRelu:
        backward_relu(n);
        break;
      case OpKind::kTanh:
        backward_tanh(n);
        break;
      case OpKind::kMse:
        backward_mse(n);
        break;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cmpnet
