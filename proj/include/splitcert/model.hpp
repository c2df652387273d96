#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "splitcert/tensor.hpp"

namespace splitcert {

enum class LayerKind { Affine, CircularConv, Pad, Crop, Downsample, Bias, ReLU };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

/// One layer operator in a sequential network. Parameters are kind-dependent;
/// unused members stay empty.
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  Shape shape_in, shape_out;

  // Affine: z = W y + b.
  Eigen::MatrixXd W;
  // Affine/Bias/Crop bias term (Crop uses it as the fused post-processing bias).
  Eigen::VectorXd b;

  // CircularConv: kernels shaped (out_ch, in_ch, kh, kw), circular
  // cross-correlation on the (ch, H, W) grid.
  Tensor kernels;

  // Pad: margins {top, bottom, left, right} per spatial edge.
  std::array<std::int64_t, 4> margins{0, 0, 0, 0};

  // Crop/Downsample: retained-index selection, output o copies input indices[o].
  std::vector<std::int64_t> indices;

  // Downsample: stride per spatial axis {sy, sx}; expanded to `indices` on
  // construction.
  std::array<std::int64_t, 2> stride{1, 1};

  std::int64_t dim_in() const { return shape_numel(shape_in); }
  std::int64_t dim_out() const { return shape_numel(shape_out); }

  void validate() const;

  /// Linear part applied column-wise: out = L(in), without the constant term.
  void apply_linear(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
  /// Transpose of the linear part, single column.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const;
  /// Elementwise-absolute-value of the linear part (for interval radii).
  Eigen::VectorXd apply_abs(const Eigen::VectorXd& v) const;
  /// Constant term (bias contribution); zero vector for most kinds.
  Eigen::VectorXd constant_term() const;
  /// Full layer map, column-wise. ReLU included.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& in) const;

  bool is_selection_like() const {
    return kind == LayerKind::Pad || kind == LayerKind::Crop ||
           kind == LayerKind::Downsample || kind == LayerKind::Bias;
  }
};

Layer make_affine_layer(const Eigen::MatrixXd& W, const Eigen::VectorXd& b);
Layer make_relu_layer(const Shape& shape);
Layer make_bias_layer(const Eigen::VectorXd& b, const Shape& shape);
Layer make_pad_layer(const Shape& shape_in, std::array<std::int64_t, 4> margins);
Layer make_crop_layer(const Shape& shape_in, const Shape& shape_out,
                      std::vector<std::int64_t> indices,
                      std::optional<Eigen::VectorXd> bias = std::nullopt);
Layer make_downsample_layer(const Shape& shape_in, std::array<std::int64_t, 2> stride);
Layer make_circular_conv_layer(Tensor kernels, const Shape& shape_in);

/// Sequential feed-forward network with a validated shape chain.
struct Network {
  std::vector<Layer> layers;
  Shape input_shape;

  void validate() const;
  std::vector<std::int64_t> layer_dims() const;
  std::int64_t input_dim() const { return shape_numel(input_shape); }
  std::int64_t output_dim() const { return layers.back().dim_out(); }
};

/// All activations x_0..x_l for a single input.
std::vector<Tensor> forward(const Network& net, const Tensor& x0);

/// Batched forward on flat column-major matrices (dim x batch).
std::vector<Eigen::MatrixXd> forward_batch(const Network& net, const Eigen::MatrixXd& x0);

/// A standard convolution with stride/padding/bias, to be decomposed into
/// pad -> circular conv -> fused crop/downsample/bias layers.
struct ConvSpec {
  Tensor kernels;  // (out_ch, in_ch, kh, kw)
  std::optional<Eigen::VectorXd> bias;  // per output channel
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  Shape input_shape;  // (in_ch, H, W)
};

std::vector<Layer> decompose_conv(const ConvSpec& spec);

Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);

}  // namespace splitcert
