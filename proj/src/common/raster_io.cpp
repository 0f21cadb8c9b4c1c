#include "iflatcam/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string_view>
#include <fstream>
#include <iterator>
#include <sstream>

#include "iflatcam/error.hpp"

namespace iflatcam::io {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_raw(const Eigen::MatrixXd& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kRawHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
  for (char c : std::string_view("IFCM")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u32(out, 0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint64_t>(m(r, c));
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

Eigen::MatrixXd decode_raw(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kRawHeaderBytes || std::memcmp(bytes.data(), "IFCM", 4) != 0) {
    throw validation_error("raw container: bad magic");
  }
  const std::uint32_t rows = get_u32(bytes.data() + 4);
  const std::uint32_t cols = get_u32(bytes.data() + 8);
  const std::size_t expected = kRawHeaderBytes + 8ULL * rows * cols;
  if (bytes.size() != expected) {
    throw validation_error("raw container: expected " + std::to_string(expected) + " bytes, got " +
                           std::to_string(bytes.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  const std::uint8_t* p = bytes.data() + kRawHeaderBytes;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c, p += 8) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
      m(r, c) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

std::vector<std::uint8_t> encode_pgm(const Eigen::MatrixXd& m) {
  std::ostringstream header;
  header << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = std::clamp(m(r, c), 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::round(v * 255.0)));
    }
  }
  return out;
}

Eigen::MatrixXd decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > (1L << 24)) throw validation_error("pgm: header value too large");
    }
    if (!any) throw validation_error("pgm: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw validation_error("pgm: not a P5 file");
  pos = 2;
  const long width = read_int();
  const long height = read_int();
  const long maxval = read_int();
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) throw validation_error("pgm: unsupported header");
  ++pos;  // single whitespace before raster
  if (bytes.size() - std::min(pos, bytes.size()) < static_cast<std::size_t>(width * height)) {
    throw validation_error("pgm: truncated raster");
  }
  Eigen::MatrixXd m(height, width);
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) m(r, c) = bytes[pos++] / static_cast<double>(maxval);
  }
  return m;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

void write_raw(const std::filesystem::path& path, const Eigen::MatrixXd& m) { write_bytes(path, encode_raw(m)); }
Eigen::MatrixXd read_raw(const std::filesystem::path& path) { return decode_raw(read_bytes(path)); }
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& m) { write_bytes(path, encode_pgm(m)); }
Eigen::MatrixXd read_pgm(const std::filesystem::path& path) { return decode_pgm(read_bytes(path)); }

}  // namespace iflatcam::io
