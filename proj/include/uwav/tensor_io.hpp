#pragma once

// Binary tensor container. One record per tensor:
//   magic   "UWAVTENS"  (8 ASCII bytes)
//   version u32 = 1     (little-endian)
//   rank    u32
//   dims    u32 x rank
//   payload f32 x prod(dims), row-major, little-endian
// Feature files hold a single record; checkpoints concatenate records.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "uwav/tensor.hpp"

namespace uwav {

class tensor_format_error : public std::runtime_error {
 public:
  enum class Kind { open_failed, bad_magic, bad_version, truncated, trailing_data };
  tensor_format_error(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr char kTensorMagic[9] = "UWAVTENS";
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& context);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
// Reads a file expected to hold exactly one record; trailing bytes are an error.
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace uwav
