#include "splitcert/model.hpp"

#include <sstream>

namespace splitcert {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Affine: return "affine";
    case LayerKind::CircularConv: return "circ_conv";
    case LayerKind::Pad: return "pad";
    case LayerKind::Crop: return "crop";
    case LayerKind::Downsample: return "downsample";
    case LayerKind::Bias: return "bias";
    case LayerKind::ReLU: return "relu";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "affine") return LayerKind::Affine;
  if (name == "circ_conv") return LayerKind::CircularConv;
  if (name == "pad") return LayerKind::Pad;
  if (name == "crop") return LayerKind::Crop;
  if (name == "downsample") return LayerKind::Downsample;
  if (name == "bias") return LayerKind::Bias;
  if (name == "relu") return LayerKind::ReLU;
  throw ParseError("unknown layer kind: " + name);
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

struct ConvGeom {
  std::int64_t m, n, kh, kw, h, w;
};

ConvGeom conv_geom(const Layer& layer) {
  const auto& ks = layer.kernels.shape;
  return {ks[0], ks[1], ks[2], ks[3], layer.shape_in[1], layer.shape_in[2]};
}

}  // namespace

void Layer::validate() const {
  require(!shape_in.empty() && !shape_out.empty(), "layer missing shapes");
  switch (kind) {
    case LayerKind::Affine:
      require(W.rows() == dim_out() && W.cols() == dim_in(),
              "affine W dims inconsistent with layer shapes");
      require(b.size() == dim_out(), "affine b dims inconsistent with W");
      break;
    case LayerKind::CircularConv: {
      require(kernels.shape.size() == 4, "conv kernels must be 4-d");
      require(shape_in.size() == 3 && shape_out.size() == 3,
              "conv shapes must be (ch, h, w)");
      auto g = conv_geom(*this);
      require(shape_in[0] == g.n && shape_out[0] == g.m, "conv channel mismatch");
      require(shape_out[1] == g.h && shape_out[2] == g.w,
              "circular conv preserves spatial shape");
      if (g.kh > g.h || g.kw > g.w)
        throw GeometryError("conv kernel larger than spatial extent");
      break;
    }
    case LayerKind::Pad:
      require(shape_in.size() == 3 && shape_out.size() == 3, "pad shapes must be (ch, h, w)");
      require(shape_out[0] == shape_in[0] &&
                  shape_out[1] == shape_in[1] + margins[0] + margins[1] &&
                  shape_out[2] == shape_in[2] + margins[2] + margins[3],
              "pad margins inconsistent with shapes");
      require(static_cast<std::int64_t>(indices.size()) == dim_out(), "pad index map missing");
      break;
    case LayerKind::Crop:
    case LayerKind::Downsample:
      require(static_cast<std::int64_t>(indices.size()) == dim_out(),
              "selection index count must match output dim");
      for (auto i : indices)
        require(i >= 0 && i < dim_in(), "selection index out of range");
      if (b.size() != 0) require(b.size() == dim_out(), "selection bias dim mismatch");
      break;
    case LayerKind::Bias:
      require(dim_in() == dim_out(), "bias layer must preserve shape");
      require(b.size() == dim_out(), "bias dim mismatch");
      break;
    case LayerKind::ReLU:
      require(dim_in() == dim_out(), "relu layer must preserve shape");
      break;
  }
}

void Layer::apply_linear(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const {
  const auto cols = in.cols();
  switch (kind) {
    case LayerKind::Affine:
      out.noalias() = W * in;
      return;
    case LayerKind::Bias:
      out = in;
      return;
    case LayerKind::Pad:
    case LayerKind::Crop:
    case LayerKind::Downsample: {
      out.resize(dim_out(), cols);
      for (std::int64_t o = 0; o < dim_out(); ++o) {
        auto src = indices[static_cast<std::size_t>(o)];
        if (src < 0)
          out.row(o).setZero();
        else
          out.row(o) = in.row(src);
      }
      return;
    }
    case LayerKind::CircularConv: {
      auto g = conv_geom(*this);
      out.setZero(dim_out(), cols);
      const auto& K = kernels.data;
      for (Eigen::Index col = 0; col < cols; ++col) {
        const double* xin = in.col(col).data();
        double* zout = out.col(col).data();
        for (std::int64_t j = 0; j < g.m; ++j)
          for (std::int64_t i = 0; i < g.n; ++i)
            for (std::int64_t qy = 0; qy < g.kh; ++qy)
              for (std::int64_t qx = 0; qx < g.kw; ++qx) {
                double kv = K[static_cast<std::size_t>(
                    ((j * g.n + i) * g.kh + qy) * g.kw + qx)];
                if (kv == 0.0) continue;
                for (std::int64_t py = 0; py < g.h; ++py) {
                  std::int64_t sy = (py + qy) % g.h;
                  for (std::int64_t px = 0; px < g.w; ++px) {
                    std::int64_t sx = (px + qx) % g.w;
                    zout[(j * g.h + py) * g.w + px] +=
                        kv * xin[(i * g.h + sy) * g.w + sx];
                  }
                }
              }
      }
      return;
    }
    case LayerKind::ReLU:
      throw ShapeError("relu has no linear part");
  }
}

Eigen::VectorXd Layer::apply_transpose(const Eigen::VectorXd& v) const {
  switch (kind) {
    case LayerKind::Affine:
      return W.transpose() * v;
    case LayerKind::Bias:
      return v;
    case LayerKind::Pad:
    case LayerKind::Crop:
    case LayerKind::Downsample: {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_in());
      for (std::int64_t o = 0; o < dim_out(); ++o) {
        auto src = indices[static_cast<std::size_t>(o)];
        if (src >= 0) out[src] += v[o];
      }
      return out;
    }
    case LayerKind::CircularConv: {
      auto g = conv_geom(*this);
      Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_in());
      const auto& K = kernels.data;
      for (std::int64_t j = 0; j < g.m; ++j)
        for (std::int64_t i = 0; i < g.n; ++i)
          for (std::int64_t qy = 0; qy < g.kh; ++qy)
            for (std::int64_t qx = 0; qx < g.kw; ++qx) {
              double kv = K[static_cast<std::size_t>(((j * g.n + i) * g.kh + qy) * g.kw + qx)];
              if (kv == 0.0) continue;
              for (std::int64_t ry = 0; ry < g.h; ++ry) {
                std::int64_t py = (ry - qy % g.h + g.h) % g.h;
                for (std::int64_t rx = 0; rx < g.w; ++rx) {
                  std::int64_t px = (rx - qx % g.w + g.w) % g.w;
                  out[(i * g.h + ry) * g.w + rx] += kv * v[(j * g.h + py) * g.w + px];
                }
              }
            }
      return out;
    }
    case LayerKind::ReLU:
      throw ShapeError("relu has no linear part");
  }
  return {};
}

Eigen::VectorXd Layer::apply_abs(const Eigen::VectorXd& v) const {
  if (kind == LayerKind::Affine) return W.cwiseAbs() * v;
  if (kind == LayerKind::CircularConv) {
    Layer abs_layer = *this;
    for (auto& kv : abs_layer.kernels.data) kv = std::abs(kv);
    Eigen::MatrixXd out;
    abs_layer.apply_linear(v, out);
    return out.col(0);
  }
  // Selection-structured layers have 0/1 linear parts.
  Eigen::MatrixXd out;
  apply_linear(v, out);
  return out.col(0);
}

Eigen::VectorXd Layer::constant_term() const {
  if (kind == LayerKind::Affine || kind == LayerKind::Bias) return b;
  if ((kind == LayerKind::Crop || kind == LayerKind::Downsample) && b.size() > 0) return b;
  return Eigen::VectorXd::Zero(dim_out());
}

Eigen::MatrixXd Layer::apply(const Eigen::MatrixXd& in) const {
  if (in.rows() != dim_in()) throw ShapeError("layer input dim mismatch");
  if (kind == LayerKind::ReLU) return in.cwiseMax(0.0);
  Eigen::MatrixXd out;
  apply_linear(in, out);
  Eigen::VectorXd ct = constant_term();
  if (!ct.isZero(0.0)) out.colwise() += ct;
  return out;
}

Layer make_affine_layer(const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  Layer l;
  l.kind = LayerKind::Affine;
  l.shape_in = {W.cols()};
  l.shape_out = {W.rows()};
  l.W = W;
  l.b = b;
  l.validate();
  return l;
}

Layer make_relu_layer(const Shape& shape) {
  Layer l;
  l.kind = LayerKind::ReLU;
  l.shape_in = l.shape_out = shape;
  l.validate();
  return l;
}

Layer make_bias_layer(const Eigen::VectorXd& b, const Shape& shape) {
  Layer l;
  l.kind = LayerKind::Bias;
  l.shape_in = l.shape_out = shape;
  l.b = b;
  l.validate();
  return l;
}

Layer make_pad_layer(const Shape& shape_in, std::array<std::int64_t, 4> margins) {
  if (shape_in.size() != 3) throw ShapeError("pad input shape must be (ch, h, w)");
  for (auto m : margins)
    if (m < 0) throw GeometryError("negative pad margin");
  Layer l;
  l.kind = LayerKind::Pad;
  l.shape_in = shape_in;
  l.margins = margins;
  const std::int64_t c = shape_in[0], h = shape_in[1], w = shape_in[2];
  const std::int64_t ho = h + margins[0] + margins[1], wo = w + margins[2] + margins[3];
  l.shape_out = {c, ho, wo};
  l.indices.assign(static_cast<std::size_t>(c * ho * wo), -1);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        l.indices[static_cast<std::size_t>((ch * ho + y + margins[0]) * wo + x + margins[2])] =
            (ch * h + y) * w + x;
  l.validate();
  return l;
}

Layer make_crop_layer(const Shape& shape_in, const Shape& shape_out,
                      std::vector<std::int64_t> indices,
                      std::optional<Eigen::VectorXd> bias) {
  Layer l;
  l.kind = LayerKind::Crop;
  l.shape_in = shape_in;
  l.shape_out = shape_out;
  l.indices = std::move(indices);
  if (bias) l.b = *bias;
  // Selection must be injective so that S S^T = I on the retained set.
  std::vector<bool> used(static_cast<std::size_t>(l.dim_in()), false);
  for (auto i : l.indices) {
    if (i < 0 || i >= l.dim_in()) throw ShapeError("crop index out of range");
    if (used[static_cast<std::size_t>(i)]) throw ShapeError("crop index repeated");
    used[static_cast<std::size_t>(i)] = true;
  }
  l.validate();
  return l;
}

Layer make_downsample_layer(const Shape& shape_in, std::array<std::int64_t, 2> stride) {
  if (shape_in.size() != 3) throw ShapeError("downsample input shape must be (ch, h, w)");
  if (stride[0] < 1 || stride[1] < 1) throw GeometryError("downsample stride must be >= 1");
  Layer l;
  l.kind = LayerKind::Downsample;
  l.shape_in = shape_in;
  l.stride = stride;
  const std::int64_t c = shape_in[0], h = shape_in[1], w = shape_in[2];
  const std::int64_t ho = (h - 1) / stride[0] + 1, wo = (w - 1) / stride[1] + 1;
  l.shape_out = {c, ho, wo};
  l.indices.reserve(static_cast<std::size_t>(c * ho * wo));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x)
        l.indices.push_back((ch * h + y * stride[0]) * w + x * stride[1]);
  l.validate();
  return l;
}

Layer make_circular_conv_layer(Tensor kernels, const Shape& shape_in) {
  Layer l;
  l.kind = LayerKind::CircularConv;
  l.kernels = std::move(kernels);
  l.kernels.validate();
  if (l.kernels.shape.size() != 4) throw ShapeError("conv kernels must be 4-d");
  if (shape_in.size() != 3) throw ShapeError("conv input shape must be (ch, h, w)");
  l.shape_in = shape_in;
  l.shape_out = {l.kernels.shape[0], shape_in[1], shape_in[2]};
  l.validate();
  return l;
}

void Network::validate() const {
  if (layers.empty()) throw ShapeError("network must have at least one layer");
  // Element counts must chain; axis layouts may differ (implicit flatten, e.g.
  // a dense layer consuming a (ch, H, W) activation).
  if (shape_numel(input_shape) != layers.front().dim_in())
    throw ShapeError("network input shape does not match first layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].validate();
    if (k + 1 < layers.size() && layers[k].dim_out() != layers[k + 1].dim_in())
      throw ShapeError("shape chain broken between layers " + std::to_string(k) + " and " +
                       std::to_string(k + 1) + ": " + shape_to_string(layers[k].shape_out) +
                       " vs " + shape_to_string(layers[k + 1].shape_in));
  }
}

std::vector<std::int64_t> Network::layer_dims() const {
  std::vector<std::int64_t> dims;
  dims.push_back(shape_numel(input_shape));
  for (const auto& l : layers) dims.push_back(l.dim_out());
  return dims;
}

std::vector<Eigen::MatrixXd> forward_batch(const Network& net, const Eigen::MatrixXd& x0) {
  if (x0.rows() != net.input_dim()) throw ShapeError("forward input dim mismatch");
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(x0);
  for (const auto& layer : net.layers) acts.push_back(layer.apply(acts.back()));
  return acts;
}

std::vector<Tensor> forward(const Network& net, const Tensor& x0) {
  if (x0.shape != net.input_shape) throw ShapeError("forward input shape mismatch");
  auto acts = forward_batch(net, x0.vec());
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < acts.size(); ++k) {
    Tensor t;
    t.shape = (k == 0) ? net.input_shape : net.layers[k - 1].shape_out;
    t.data.assign(acts[k].data(), acts[k].data() + acts[k].size());
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Layer> decompose_conv(const ConvSpec& spec) {
  if (spec.kernels.shape.size() != 4) throw ShapeError("conv kernels must be 4-d");
  if (spec.input_shape.size() != 3) throw ShapeError("conv input shape must be (ch, h, w)");
  const std::int64_t m = spec.kernels.shape[0], n = spec.kernels.shape[1];
  const std::int64_t kh = spec.kernels.shape[2], kw = spec.kernels.shape[3];
  const std::int64_t h = spec.input_shape[1], w = spec.input_shape[2];
  if (spec.input_shape[0] != n) throw ShapeError("conv input channels mismatch");
  if (spec.stride_h < 1 || spec.stride_w < 1 || spec.pad_h < 0 || spec.pad_w < 0)
    throw GeometryError("conv stride/padding out of range");
  const std::int64_t hp = h + 2 * spec.pad_h, wp = w + 2 * spec.pad_w;
  if (kh > hp || kw > wp) throw GeometryError("conv kernel larger than padded input");
  const std::int64_t ho = (hp - kh) / spec.stride_h + 1;
  const std::int64_t wo = (wp - kw) / spec.stride_w + 1;

  std::vector<Layer> layers;
  layers.push_back(make_pad_layer(spec.input_shape,
                                  {spec.pad_h, spec.pad_h, spec.pad_w, spec.pad_w}));
  layers.push_back(make_circular_conv_layer(spec.kernels, {n, hp, wp}));

  // Fused crop + downsample + bias: output (j, y, x) reads the circular
  // output at (j, y*stride, x*stride).
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(m * ho * wo));
  for (std::int64_t j = 0; j < m; ++j)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x)
        idx.push_back((j * hp + y * spec.stride_h) * wp + x * spec.stride_w);
  std::optional<Eigen::VectorXd> bias;
  if (spec.bias) {
    if (spec.bias->size() != m) throw ShapeError("conv bias dim mismatch");
    Eigen::VectorXd full(m * ho * wo);
    for (std::int64_t j = 0; j < m; ++j)
      full.segment(j * ho * wo, ho * wo).setConstant((*spec.bias)[j]);
    bias = full;
  }
  layers.push_back(make_crop_layer({m, hp, wp}, {m, ho, wo}, std::move(idx), bias));
  return layers;
}

}  // namespace splitcert
