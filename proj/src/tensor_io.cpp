#include "uwav/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace uwav {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
      (std::uint32_t(b[3]) << 24);
  return true;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, 8);
  put_u32(out, kTensorFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

Tensor read_tensor(std::istream& in, const std::string& context) {
  char magic[8];
  if (!in.read(magic, 8))
    throw tensor_format_error(tensor_format_error::Kind::truncated,
                              context + ": truncated before magic");
  if (std::memcmp(magic, kTensorMagic, 8) != 0)
    throw tensor_format_error(tensor_format_error::Kind::bad_magic,
                              context + ": bad magic, not a UWAVTENS stream");
  std::uint32_t version = 0;
  if (!get_u32(in, version))
    throw tensor_format_error(tensor_format_error::Kind::truncated,
                              context + ": truncated before version");
  if (version != kTensorFormatVersion)
    throw tensor_format_error(tensor_format_error::Kind::bad_version,
                              context + ": unsupported version " + std::to_string(version));
  std::uint32_t rank = 0;
  if (!get_u32(in, rank))
    throw tensor_format_error(tensor_format_error::Kind::truncated,
                              context + ": truncated before rank");
  if (rank == 0 || rank > 8)
    throw tensor_format_error(tensor_format_error::Kind::truncated,
                              context + ": implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    if (!get_u32(in, d))
      throw tensor_format_error(tensor_format_error::Kind::truncated,
                                context + ": truncated in dims");
    if (d == 0)
      throw tensor_format_error(tensor_format_error::Kind::truncated,
                                context + ": zero dimension");
    shape[i] = d;
    count *= d;
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    if (!get_u32(in, bits))
      throw tensor_format_error(tensor_format_error::Kind::truncated,
                                context + ": payload shorter than dims imply");
    data[i] = std::bit_cast<float>(bits);
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw tensor_format_error(tensor_format_error::Kind::open_failed,
                              "cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  if (!out)
    throw tensor_format_error(tensor_format_error::Kind::open_failed,
                              "write failed for " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw tensor_format_error(tensor_format_error::Kind::open_failed,
                              "cannot open " + path.string());
  Tensor t = read_tensor(in, path.string());
  in.peek();
  if (!in.eof())
    throw tensor_format_error(tensor_format_error::Kind::trailing_data,
                              path.string() + ": trailing bytes after tensor record");
  return t;
}

}  // namespace uwav
