#include <cstring>
#include <string_view>

#include "iflatcam/compress.hpp"
#include "iflatcam/error.hpp"

namespace iflatcam::compress {

namespace {

class BitWriter {
 public:
  void put(std::uint32_t value, int bits) {
    for (int b = bits - 1; b >= 0; --b) {
      if (bit_count_ % 8 == 0) bytes_.push_back(0);
      if ((value >> b) & 1U) bytes_.back() |= static_cast<std::uint8_t>(0x80U >> (bit_count_ % 8));
      ++bit_count_;
    }
  }
  std::uint64_t bit_count() const { return bit_count_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bit_count_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t get(int bits) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b) {
      const std::size_t byte = pos_ / 8;
      if (byte >= bytes_.size()) throw validation_error("compressed layer: CM section truncated");
      v = (v << 1) | ((bytes_[byte] >> (7 - pos_ % 8)) & 1U);
      ++pos_;
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t read_uleb128(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= bytes.size()) throw validation_error("compressed layer: index section truncated");
    const std::uint8_t byte = bytes[pos++];
    value |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
    if ((byte & 0x80) == 0) return value;
  }
  throw validation_error("compressed layer: ULEB128 value too long");
}

void encode_entry(BitWriter& writer, const Pow2& entry, int exponent_bits, int scale) {
  if (entry.sign == 0) {
    writer.put(1, 1);
    writer.put(0, 1 + exponent_bits);
    return;
  }
  const int code = entry.exponent - scale;
  writer.put(0, 1);
  writer.put(entry.sign < 0 ? 1 : 0, 1);
  writer.put(static_cast<std::uint32_t>(code) & ((1U << exponent_bits) - 1U), exponent_bits);
}

Pow2 decode_entry(BitReader& reader, int exponent_bits, int scale) {
  const bool zero = reader.get(1) != 0;
  const bool negative = reader.get(1) != 0;
  std::int32_t code = static_cast<std::int32_t>(reader.get(exponent_bits));
  if (zero) return {};
  if (code & (1 << (exponent_bits - 1))) code -= 1 << exponent_bits;
  return {static_cast<std::int8_t>(negative ? -1 : 1), static_cast<std::int16_t>(scale + code)};
}

void check_entry(const Pow2& entry, int e_min, int e_max) {
  if (entry.sign != 0 && (entry.exponent < e_min || entry.exponent > e_max)) {
    throw validation_error("coefficient exponent " + std::to_string(entry.exponent) + " outside [" +
                           std::to_string(e_min) + ", " + std::to_string(e_max) + "]");
  }
}

}  // namespace

std::size_t uleb128_size(std::uint64_t value) {
  std::size_t n = 1;
  while (value >= 0x80) {
    value >>= 7;
    ++n;
  }
  return n;
}

void uleb128_append(std::vector<std::uint8_t>& out, std::uint64_t value) {
  do {
    std::uint8_t byte = value & 0x7F;
    value >>= 7;
    if (value != 0) byte |= 0x80;
    out.push_back(byte);
  } while (value != 0);
}

std::vector<std::int64_t> CompressedLayer::row_map() const {
  std::vector<std::int64_t> map;
  map.reserve(n_rows);
  std::int64_t stored = 0;
  for (std::size_t t = 0; t < rle_index.size(); ++t) {
    map.insert(map.end(), rle_index[t], -1);
    if (t + 1 < rle_index.size()) map.push_back(stored++);
  }
  if (map.size() != n_rows || static_cast<std::size_t>(stored) != nonzero_rows.size()) {
    throw validation_error("RLE index inconsistent with row count");
  }
  return map;
}

CompressedLayer rle_encode(const CoefficientMatrix& cm, const BasisMatrix& bm) {
  if (cm.exponent_bits < 1 || cm.exponent_bits > 16) throw validation_error("exponent_bits must be in [1, 16]");
  if (bm.rank() != cm.rank) throw validation_error("BM rank does not match CM rank");
  CompressedLayer layer;
  layer.bm = bm;
  layer.n_rows = static_cast<std::uint32_t>(cm.rows.size());
  layer.exponent_bits = cm.exponent_bits;
  layer.scale_exponent = cm.scale_exponent;

  std::uint32_t run = 0;
  for (const auto& row : cm.rows) {
    if (row.is_zero()) {
      ++run;
      continue;
    }
    if (row.entries.size() != static_cast<std::size_t>(cm.rank)) throw validation_error("CM row has wrong width");
    for (const auto& e : row.entries) check_entry(e, cm.exponent_min(), cm.exponent_max());
    layer.rle_index.push_back(run);
    layer.nonzero_rows.push_back(row.entries);
    run = 0;
  }
  layer.rle_index.push_back(run);

  layer.bit_budget.bm_bits = static_cast<std::uint64_t>(bm.words.size()) * BasisMatrix::kWordBits;
  layer.bit_budget.cm_bits = layer.nonzero_rows.size() * static_cast<std::uint64_t>(cm.rank) * cm_entry_bits(cm.exponent_bits);
  for (auto v : layer.rle_index) layer.bit_budget.index_bits += 8 * uleb128_size(v);
  return layer;
}

CoefficientMatrix rle_decode(const CompressedLayer& layer) {
  std::uint64_t runs = 0;
  for (auto v : layer.rle_index) runs += v;
  if (layer.rle_index.size() != layer.nonzero_rows.size() + 1 || runs + layer.nonzero_rows.size() != layer.n_rows) {
    throw validation_error("RLE index inconsistent with declared row count " + std::to_string(layer.n_rows));
  }
  CoefficientMatrix cm;
  cm.rank = static_cast<std::int32_t>(layer.rank());
  cm.exponent_bits = layer.exponent_bits;
  cm.scale_exponent = layer.scale_exponent;
  cm.rows.reserve(layer.n_rows);
  for (std::size_t t = 0; t < layer.rle_index.size(); ++t) {
    cm.rows.insert(cm.rows.end(), layer.rle_index[t], CoefficientRow{});
    if (t < layer.nonzero_rows.size()) cm.rows.push_back(CoefficientRow{layer.nonzero_rows[t]});
  }
  return cm;
}

std::vector<std::uint8_t> serialize(const CompressedLayer& layer) {
  std::vector<std::uint8_t> out;
  for (char c : std::string_view("IFC1")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, layer.n_rows);
  put_u32(out, layer.rank());
  put_u32(out, layer.width());
  out.push_back(static_cast<std::uint8_t>(layer.exponent_bits));
  out.push_back(static_cast<std::uint8_t>(layer.bm.fraction_bits));
  out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(layer.scale_exponent)));

  for (Eigen::Index i = 0; i < layer.bm.words.rows(); ++i) {
    for (Eigen::Index j = 0; j < layer.bm.words.cols(); ++j) {
      const auto word = static_cast<std::uint16_t>(static_cast<std::int16_t>(layer.bm.words(i, j)));
      out.push_back(static_cast<std::uint8_t>(word & 0xFF));
      out.push_back(static_cast<std::uint8_t>(word >> 8));
    }
  }
  for (auto v : layer.rle_index) uleb128_append(out, v);

  BitWriter cm;
  for (const auto& row : layer.nonzero_rows) {
    for (const auto& e : row) encode_entry(cm, e, layer.exponent_bits, layer.scale_exponent);
  }
  out.insert(out.end(), cm.bytes().begin(), cm.bytes().end());
  return out;
}

CompressedLayer deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), "IFC1", 4) != 0) {
    throw validation_error("compressed layer: bad magic");
  }
  CompressedLayer layer;
  layer.n_rows = get_u32(bytes, 4);
  const std::uint32_t r = get_u32(bytes, 8);
  const std::uint32_t d = get_u32(bytes, 12);
  layer.exponent_bits = bytes[16];
  layer.bm.fraction_bits = bytes[17];
  layer.scale_exponent = static_cast<std::int8_t>(bytes[18]);
  if (layer.exponent_bits < 1 || layer.exponent_bits > 16) throw validation_error("compressed layer: bad exponent_bits");

  std::size_t pos = kHeaderBytes;
  const std::size_t bm_bytes = 2ULL * r * d;
  if (bytes.size() - pos < bm_bytes) throw validation_error("compressed layer: BM section truncated");
  layer.bm.words.resize(r, d);
  for (std::uint32_t i = 0; i < r; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, pos += 2) {
      const auto word = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
      layer.bm.words(i, j) = static_cast<std::int16_t>(word);
    }
  }

  // A run that reaches n is the trailing run; every other run is followed by a stored row.
  std::uint64_t covered = 0;
  while (true) {
    const std::uint64_t run = read_uleb128(bytes, pos);
    if (run > layer.n_rows || covered + run > layer.n_rows) throw validation_error("compressed layer: run overflows n");
    layer.rle_index.push_back(static_cast<std::uint32_t>(run));
    covered += run;
    if (covered == layer.n_rows) break;
    ++covered;
  }
  const std::size_t stored = layer.rle_index.size() - 1;

  const std::uint64_t cm_bits = stored * static_cast<std::uint64_t>(r) * cm_entry_bits(layer.exponent_bits);
  if (bytes.size() - pos != (cm_bits + 7) / 8) throw validation_error("compressed layer: CM section has wrong length");
  BitReader reader(bytes.subspan(pos));
  layer.nonzero_rows.resize(stored);
  for (auto& row : layer.nonzero_rows) {
    row.reserve(r);
    for (std::uint32_t j = 0; j < r; ++j) row.push_back(decode_entry(reader, layer.exponent_bits, layer.scale_exponent));
  }

  layer.bit_budget.bm_bits = bm_bytes * 8;
  layer.bit_budget.cm_bits = cm_bits;
  for (auto v : layer.rle_index) layer.bit_budget.index_bits += 8 * uleb128_size(v);
  return layer;
}

}  // namespace iflatcam::compress
