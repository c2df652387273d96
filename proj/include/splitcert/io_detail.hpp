#pragma once

#include <bit>
#include <string>
#include <vector>

#include <json.hpp>

#include "splitcert/tensor.hpp"

namespace splitcert::detail {

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& s);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace splitcert::detail
