#include <cstring>
#include <fstream>

#include <json.hpp>

#include "splitcert/io_detail.hpp"
#include "splitcert/model.hpp"

namespace splitcert {

using nlohmann::json;

namespace detail {

namespace {
constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Chars[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Chars[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  unsigned buf = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = b64_value(c);
    if (v < 0) throw ParseError("invalid base64 character");
    buf = (buf << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

json tensor_to_json(const Tensor& t) {
  static_assert(std::endian::native == std::endian::little,
                "f64le encoding assumes a little-endian host");
  json j;
  j["dtype"] = "f64le";
  j["shape"] = t.shape;
  j["data"] = base64_encode(reinterpret_cast<const unsigned char*>(t.data.data()),
                            t.data.size() * sizeof(double));
  return j;
}

Tensor tensor_from_json(const json& j) {
  if (!j.is_object() || !j.contains("dtype") || !j.contains("shape") || !j.contains("data"))
    throw ParseError("malformed tensor object");
  if (j["dtype"].get<std::string>() != "f64le") throw ParseError("unsupported tensor dtype");
  Tensor t;
  t.shape = j["shape"].get<Shape>();
  auto bytes = base64_decode(j["data"].get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(shape_numel(t.shape)) * sizeof(double))
    throw ParseError("tensor data length does not match declared shape");
  t.data.resize(bytes.size() / sizeof(double));
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  t.validate();
  if (!t.all_finite()) throw ParseError("tensor contains non-finite values");
  return t;
}

}  // namespace detail

namespace {

using detail::tensor_from_json;
using detail::tensor_to_json;

Tensor matrix_to_tensor(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.resize(static_cast<std::size_t>(m.size()));
  // row-major on disk
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw ParseError("expected a rank-2 tensor");
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = t.data[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

json layer_to_json(const Layer& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  j["shape_in"] = l.shape_in;
  j["shape_out"] = l.shape_out;
  json p = json::object();
  switch (l.kind) {
    case LayerKind::Affine:
      p["W"] = tensor_to_json(matrix_to_tensor(l.W));
      p["b"] = tensor_to_json(Tensor::from_vector(l.b));
      break;
    case LayerKind::CircularConv:
      p["kernels"] = tensor_to_json(l.kernels);
      break;
    case LayerKind::Pad:
      p["margins"] = l.margins;
      break;
    case LayerKind::Crop:
      p["indices"] = l.indices;
      if (l.b.size() > 0) p["bias"] = tensor_to_json(Tensor::from_vector(l.b));
      break;
    case LayerKind::Downsample:
      p["stride"] = l.stride;
      break;
    case LayerKind::Bias:
      p["b"] = tensor_to_json(Tensor::from_vector(l.b));
      break;
    case LayerKind::ReLU:
      break;
  }
  j["params"] = p;
  return j;
}

Layer layer_from_json(const json& j) {
  if (!j.contains("kind") || !j.contains("shape_in") || !j.contains("shape_out"))
    throw ParseError("layer object missing kind/shape fields");
  LayerKind kind = layer_kind_from_name(j["kind"].get<std::string>());
  Shape in = j["shape_in"].get<Shape>(), out = j["shape_out"].get<Shape>();
  const json& p = j.value("params", json::object());
  Layer l;
  switch (kind) {
    case LayerKind::Affine:
      l = make_affine_layer(tensor_to_matrix(tensor_from_json(p.at("W"))),
                            tensor_from_json(p.at("b")).vec());
      break;
    case LayerKind::CircularConv:
      l = make_circular_conv_layer(tensor_from_json(p.at("kernels")), in);
      break;
    case LayerKind::Pad: {
      auto m = p.at("margins").get<std::array<std::int64_t, 4>>();
      l = make_pad_layer(in, m);
      break;
    }
    case LayerKind::Crop: {
      std::optional<Eigen::VectorXd> bias;
      if (p.contains("bias")) bias = Eigen::VectorXd(tensor_from_json(p.at("bias")).vec());
      l = make_crop_layer(in, out, p.at("indices").get<std::vector<std::int64_t>>(), bias);
      break;
    }
    case LayerKind::Downsample:
      l = make_downsample_layer(in, p.at("stride").get<std::array<std::int64_t, 2>>());
      break;
    case LayerKind::Bias:
      l = make_bias_layer(tensor_from_json(p.at("b")).vec(), in);
      break;
    case LayerKind::ReLU:
      l = make_relu_layer(in);
      break;
  }
  if (l.shape_in != in || l.shape_out != out)
    throw ShapeError("declared layer shapes inconsistent with parameters");
  return l;
}

}  // namespace

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open network file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("network file is not valid JSON: ") + e.what());
  }
  Network net;
  try {
    net.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) net.layers.push_back(layer_from_json(lj));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed network object: ") + e.what());
  }
  net.validate();
  return net;
}

void save_network(const Network& net, const std::string& path) {
  net.validate();
  json j;
  j["input_shape"] = net.input_shape;
  j["layers"] = json::array();
  for (const auto& l : net.layers) j["layers"].push_back(layer_to_json(l));
  std::ofstream f(path);
  if (!f) throw IoError("cannot open file for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace splitcert
