#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "csfusion/belm/model.hpp"
#include "csfusion/error.hpp"

namespace csfusion::belm {

// Layout:
//   "BELM" | u32 version | u32 header_len | header JSON (sorted keys)
//   | tensors in visit() order, rows*cols little-endian IEEE values each.
// The header records config, vocab_size, dtype, steps and every tensor's
// name and shape.
inline constexpr char kCheckpointMagic[4] = {'B', 'E', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) {
    throw Error(ErrorKind::kParseError, "checkpoint truncated");
  }
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, in.data() + pos, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  pos += sizeof(U);
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

template <typename T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const BelmModel<T>& model) {
  nlohmann::json tensors = nlohmann::json::array();
  model.visit([&](const std::string& name, const Param<T>& p) {
    tensors.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  });
  const nlohmann::json header{{"config", model.config()},
                              {"dtype", detail::dtype_name<T>()},
                              {"steps", model.steps()},
                              {"tensors", tensors},
                              {"vocab_size", model.vocab_size()}};
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic, 4);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  model.visit([&](const std::string&, const Param<T>& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      detail::put_le(out, p.value.data()[i]);
    }
  });
  return out;
}

/// Rebuilds a model from checkpoint bytes. With `expected`, a checkpoint
/// whose shape-determining config differs raises ShapeMismatch.
template <typename T>
BelmModel<T> deserialize_checkpoint(const std::string& bytes,
                                    const BelmConfig* expected = nullptr) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::kVersionMismatch, "not a BELM checkpoint");
  }
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kVersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + header_len > bytes.size()) {
    throw Error(ErrorKind::kParseError, "checkpoint header truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
    pos += header_len;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("checkpoint header: ") + e.what());
  }

  BelmConfig config;
  std::size_t vocab_size = 0;
  std::string dtype;
  std::uint64_t steps = 0;
  try {
    config = header.at("config").get<BelmConfig>();
    vocab_size = header.at("vocab_size").get<std::size_t>();
    dtype = header.at("dtype").get<std::string>();
    steps = header.at("steps").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("checkpoint header: ") + e.what());
  }
  if (expected && !expected->same_shape(config)) {
    throw Error(ErrorKind::kShapeMismatch,
                "checkpoint config does not match the expected model shape");
  }
  if (dtype != "f32" && dtype != "f64") {
    throw Error(ErrorKind::kParseError, "unknown dtype " + dtype);
  }

  BelmModel<T> model(config, vocab_size);
  model.set_steps(steps);
  const auto& declared = header.at("tensors");
  std::size_t index = 0;
  model.visit([&](const std::string& name, Param<T>& p) {
    if (index >= declared.size() || declared[index].at("name") != name ||
        declared[index].at("rows").get<Eigen::Index>() != p.value.rows() ||
        declared[index].at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw Error(ErrorKind::kShapeMismatch, "tensor '" + name + "'");
    }
    ++index;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = dtype == "f32"
                              ? static_cast<T>(detail::get_le<float>(bytes, pos))
                              : static_cast<T>(detail::get_le<double>(bytes, pos));
    }
  });
  if (index != declared.size()) {
    throw Error(ErrorKind::kShapeMismatch, "tensor count differs");
  }
  if (pos != bytes.size()) {
    throw Error(ErrorKind::kParseError, "trailing bytes after tensors");
  }
  return model;
}

template <typename T>
void save_checkpoint(const BelmModel<T>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

template <typename T>
BelmModel<T> load_checkpoint(const std::string& path,
                             const BelmConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes, expected);
}

/// Parameter-wise mean of models with identical shapes.
template <typename T>
BelmModel<T> average_checkpoints(const std::vector<BelmModel<T>>& models) {
  if (models.empty()) throw Error(ErrorKind::kInvalidArgument, "nothing to average");
  BelmModel<T> avg = models.front();
  auto dst = avg.parameters();
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (!models[m].config().same_shape(avg.config()) ||
        models[m].vocab_size() != avg.vocab_size()) {
      throw Error(ErrorKind::kShapeMismatch, "cannot average differing models");
    }
    std::size_t i = 0;
    models[m].visit([&](const std::string&, const Param<T>& p) {
      dst[i++]->value += p.value;
    });
  }
  for (auto* p : dst) p->value /= static_cast<T>(models.size());
  return avg;
}

}  // namespace csfusion::belm
