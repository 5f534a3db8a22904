#include "nubble/tensor_io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>

#include "nubble/kernel.hpp"

namespace nubble {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlign = 64;

template <typename UInt>
UInt load_le(const std::uint8_t* p) {
  UInt v = 0;
  for (std::size_t b = 0; b < sizeof(UInt); ++b) v |= static_cast<UInt>(p[b]) << (8 * b);
  return v;
}

template <typename UInt>
void store_le(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t b = 0; b < sizeof(UInt); ++b)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFF));
}

// Minimal reader for the Python dict literal in an NPY header:
// {'descr': '<f4', 'fortran_order': False, 'shape': (2, 2, 4), }
class HeaderParser {
 public:
  HeaderParser(std::string_view text, const std::string& name) : text_(text), name_(name) {}

  struct Header {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::uint64_t> shape;
  };

  Header parse() {
    std::map<std::string, bool> seen;
    Header h;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = string_literal();
      expect(':');
      if (seen[key]) fail("duplicate key '" + key + "'");
      seen[key] = true;
      if (key == "descr") {
        h.descr = string_literal();
      } else if (key == "fortran_order") {
        h.fortran_order = boolean();
      } else if (key == "shape") {
        h.shape = tuple();
      } else {
        fail("unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail("expected ',' or '}'");
      }
    }
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after header dict");
    if (!seen["descr"] || !seen["fortran_order"] || !seen["shape"])
      fail("header must define descr, fortran_order and shape");
    return h;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": malformed NPY header: " + what);
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string string_literal() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected string literal");
    const auto end = text_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string literal");
    std::string s(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return s;
  }
  bool boolean() {
    skip_ws();
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }
  std::vector<std::uint64_t> tuple() {
    expect('(');
    std::vector<std::uint64_t> dims;
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected shape dimension");
      std::uint64_t v = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + static_cast<std::uint64_t>(text_[pos_] - '0');
        if (v > (std::uint64_t{1} << 40)) fail("shape dimension too large");
        ++pos_;
      }
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ')') {
        fail("expected ',' or ')' in shape");
      }
    }
  }

  std::string_view text_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

template <typename Float, typename UInt>
Float load_float(const std::uint8_t* p) {
  static_assert(sizeof(Float) == sizeof(UInt));
  return std::bit_cast<Float>(load_le<UInt>(p));
}

std::vector<std::uint8_t> encode(const std::string& descr, const std::vector<Index>& shape,
                                 const std::vector<std::uint8_t>& payload) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) dict += ", ";
    dict += std::to_string(shape[i]);
  }
  if (shape.size() == 1) dict += ",";
  dict += "), }";
  const std::size_t unpadded = kMagicLen + 2 + 2 + dict.size() + 1;
  dict.append((kAlign - unpadded % kAlign) % kAlign, ' ');
  dict += '\n';

  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  out.push_back(1);
  out.push_back(0);
  store_le<std::uint16_t>(out, static_cast<std::uint16_t>(dict.size()));
  out.insert(out.end(), dict.begin(), dict.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace

Tensor decode_npy(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < kMagicLen + 2 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    throw FormatError(name + ": missing NPY magic string");
  const std::uint8_t major = bytes[kMagicLen];
  std::size_t header_len = 0;
  std::size_t offset = kMagicLen + 2;
  if (major == 1) {
    if (bytes.size() < offset + 2) throw FormatError(name + ": truncated NPY preamble");
    header_len = load_le<std::uint16_t>(bytes.data() + offset);
    offset += 2;
  } else if (major == 2) {
    if (bytes.size() < offset + 4) throw FormatError(name + ": truncated NPY preamble");
    header_len = load_le<std::uint32_t>(bytes.data() + offset);
    offset += 4;
  } else {
    throw UnsupportedFormatError(name + ": NPY version " + std::to_string(major) +
                                 " is not supported");
  }
  if (bytes.size() < offset + header_len) throw FormatError(name + ": truncated NPY header");
  const std::string_view header_text(reinterpret_cast<const char*>(bytes.data() + offset),
                                     header_len);
  const auto header = HeaderParser(header_text, name).parse();
  offset += header_len;

  if (header.fortran_order)
    throw UnsupportedFormatError(name + ": Fortran-ordered arrays are not supported");

  enum class Kind { F32, F64, U8 };
  Kind kind = Kind::U8;
  std::size_t item = 1;
  if (header.descr == "<f4") {
    kind = Kind::F32;
    item = 4;
  } else if (header.descr == "<f8") {
    kind = Kind::F64;
    item = 8;
  } else if (header.descr != "|u1" && header.descr != "<u1" && header.descr != "|b1") {
    throw UnsupportedFormatError(name + ": unsupported dtype '" + header.descr + "'");
  }

  const auto& shape = header.shape;
  const bool is_grid = shape.size() == 3 && kind != Kind::U8;
  const bool is_mask = shape.size() == 2 && kind == Kind::U8;
  if (!is_grid && !is_mask)
    throw UnsupportedFormatError(name + ": dtype '" + header.descr + "' with rank " +
                                 std::to_string(shape.size()) +
                                 " is neither an (H,W,C) float grid nor an (H,W) u1 mask");
  std::uint64_t count = 1;
  for (auto d : shape) {
    if (d == 0) throw ValidationError(name + ": zero-length dimension in shape");
    count *= d;
  }
  if (bytes.size() - offset != count * item)
    throw FormatError(name + ": payload holds " + std::to_string(bytes.size() - offset) +
                      " bytes, header implies " + std::to_string(count * item));
  const std::uint8_t* data = bytes.data() + offset;

  if (is_mask) {
    BinaryMask mask(static_cast<Index>(shape[0]), static_cast<Index>(shape[1]));
    for (std::uint64_t i = 0; i < count; ++i) {
      if (data[i] > 1)
        throw ValidationError(name + ": mask value " + std::to_string(data[i]) +
                              " at flat index " + std::to_string(i) + " is not 0 or 1");
      mask.bits[static_cast<Index>(i)] = data[i] == 1;
    }
    return mask;
  }

  const auto h = static_cast<Index>(shape[0]);
  const auto w = static_cast<Index>(shape[1]);
  const auto c = static_cast<Index>(shape[2]);
  FeatureGrid::Matrix values(h * w, c);
  double* dst = values.data();
  for (std::uint64_t i = 0; i < count; ++i) {
    dst[i] = kind == Kind::F32 ? static_cast<double>(load_float<float, std::uint32_t>(data + 4 * i))
                               : load_float<double, std::uint64_t>(data + 8 * i);
    if (!std::isfinite(dst[i]))
      throw ValidationError(name + ": non-finite value at flat index " + std::to_string(i));
  }
  return FeatureGrid(h, w, std::move(values), false, name);
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto tensor = decode_npy(read_file(path), path.string());
  if (auto* grid = std::get_if<FeatureGrid>(&tensor)) grid->set_source_id(path.stem().string());
  return tensor;
}

FeatureGrid read_grid(const std::filesystem::path& path) {
  auto tensor = read_tensor(path);
  if (!std::holds_alternative<FeatureGrid>(tensor))
    throw UnsupportedFormatError(path.string() + ": expected an (H,W,C) feature grid, got a mask");
  return std::get<FeatureGrid>(std::move(tensor));
}

BinaryMask read_mask(const std::filesystem::path& path) {
  auto tensor = read_tensor(path);
  if (!std::holds_alternative<BinaryMask>(tensor))
    throw UnsupportedFormatError(path.string() + ": expected an (H,W) mask, got a feature grid");
  return std::get<BinaryMask>(std::move(tensor));
}

std::vector<std::uint8_t> encode_npy(const FeatureGrid& grid) {
  require_finite(grid.values());
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(grid.values().size()) * 8);
  const double* src = grid.values().data();
  for (Index i = 0; i < grid.values().size(); ++i)
    store_le<std::uint64_t>(payload, std::bit_cast<std::uint64_t>(src[i]));
  return encode("<f8", {grid.height(), grid.width(), grid.channels()}, payload);
}

std::vector<std::uint8_t> encode_npy(const BinaryMask& mask) {
  if (mask.height < 1 || mask.width < 1 || mask.size() != mask.height * mask.width)
    throw ValidationError("mask dimensions are inconsistent");
  std::vector<std::uint8_t> payload(static_cast<std::size_t>(mask.size()));
  for (Index i = 0; i < mask.size(); ++i) payload[static_cast<std::size_t>(i)] = mask.bits[i] ? 1 : 0;
  return encode("|u1", {mask.height, mask.width}, payload);
}

std::vector<std::uint8_t> encode_npy(const Eigen::VectorXd& values, Index height, Index width) {
  if (values.size() != height * width) throw DimensionError("map size does not match its grid");
  require_finite(values);
  std::vector<std::uint8_t> payload;
  for (Index i = 0; i < values.size(); ++i)
    store_le<std::uint64_t>(payload, std::bit_cast<std::uint64_t>(values[i]));
  return encode("<f8", {height, width}, payload);
}

void write_tensor(const FeatureGrid& grid, const std::filesystem::path& path) {
  write_file(path, encode_npy(grid));
}

void write_tensor(const BinaryMask& mask, const std::filesystem::path& path) {
  write_file(path, encode_npy(mask));
}

FeatureGrid normalize_grid(const FeatureGrid& grid) {
  FeatureGrid out = grid;
  auto& v = out.values();
  for (Index p = 0; p < v.rows(); ++p) {
    const double norm = ordered_norm(v.row(p));
    if (norm > 0.0) v.row(p) /= norm;
  }
  out.set_normalized(true);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace nubble
