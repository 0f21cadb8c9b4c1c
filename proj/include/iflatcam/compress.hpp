#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "iflatcam/netspec.hpp"

namespace iflatcam::compress {

using netspec::LayerKind;
using netspec::LayerSpec;

/// Dense layer weights, one row per output channel / neuron:
///   CONV    Cout x (Cin*k*k), column index = (ci*k + ky)*k + kx
///   DW_CONV C    x (k*k)
///   PW_CONV Cout x Cin
///   FC      Cout x Cin
using DenseWeights = Eigen::MatrixXd;

Eigen::Index dense_weight_cols(const LayerSpec& layer);
void check_weights(const LayerSpec& layer, const DenseWeights& weights);
DenseWeights random_weights(const LayerSpec& layer, std::uint64_t seed);
/// Layer i draws from sub_seed(sub_seed(seed, "weights"), "layer.<i>").
std::vector<DenseWeights> random_network_weights(const netspec::NetworkSpec& net, std::uint64_t seed);

struct RowTag {
  std::int32_t layer_id = 0;
  std::int32_t out_channel = 0;
  std::int32_t in_channel = -1;  // -1 for PW_CONV / FC rows (whole channel vector)

  bool operator==(const RowTag&) const = default;
};

struct WeightStack {
  Eigen::MatrixXd matrix;  // n x d
  std::vector<RowTag> row_meta;
  LayerKind source_kind = LayerKind::Conv;
};

/// CONV/DW_CONV: one row per (out, in) kernel slice, d = k*k.
/// PW_CONV/FC: one row per output channel, d = Cin.
WeightStack stack_weights(const LayerSpec& layer, const DenseWeights& weights, std::int32_t layer_id = 0);
DenseWeights unstack_weights(const LayerSpec& layer, const Eigen::MatrixXd& stacked);

/// Signed power of two; sign == 0 encodes an exact zero.
struct Pow2 {
  std::int8_t sign = 0;
  std::int16_t exponent = 0;

  double value() const;
  bool operator==(const Pow2&) const = default;
};

Pow2 quantize_pow2_code(double x, int e_min, int e_max);
double quantize_pow2(double x, int e_min, int e_max);

/// Fixed-point basis matrix with 16-bit two's-complement words.
struct BasisMatrix {
  static constexpr int kWordBits = 16;

  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> words;  // r x d
  int fraction_bits = 8;

  Eigen::Index rank() const { return words.rows(); }
  Eigen::Index width() const { return words.cols(); }
  Eigen::MatrixXd to_dense() const;
  bool operator==(const BasisMatrix& other) const {
    return fraction_bits == other.fraction_bits && words == other.words;
  }
};

/// Rounds to the fixed-point grid (half away from zero) and saturates to 16 bits.
BasisMatrix to_fixed_point(const Eigen::MatrixXd& basis, int fraction_bits);

struct CoefficientRow {
  std::vector<Pow2> entries;  // empty <=> ZERO row

  bool is_zero() const { return entries.empty(); }
  bool operator==(const CoefficientRow&) const = default;
};

/// Exponents are stored relative to a per-layer scale exponent S in
/// exponent_bits two's-complement bits, so the representable range is
/// [S - 2^(b-1), S + 2^(b-1) - 1].
struct CoefficientMatrix {
  std::int32_t rank = 0;
  std::int32_t exponent_bits = 4;
  std::int32_t scale_exponent = 0;
  std::vector<CoefficientRow> rows;

  int exponent_min() const { return scale_exponent - (1 << (exponent_bits - 1)); }
  int exponent_max() const { return scale_exponent + (1 << (exponent_bits - 1)) - 1; }
  std::size_t zero_row_count() const;
  Eigen::MatrixXd to_dense() const;
  bool operator==(const CoefficientMatrix&) const = default;
};

/// Smallest exponent encoding (bits, scale) whose code range covers [e_min, e_max].
std::pair<int, int> exponent_encoding(int e_min, int e_max);

struct DecomposeOptions {
  int rank = 1;
  double sparsity_target = 0.0;
  int exponent_min = -8;
  int exponent_max = 7;
  int iters = 10;
  int bm_fraction_bits = 8;
};

/// Frobenius errors ||W - C B|| observed inside one alternating iteration.
struct IterationTrace {
  double before_c_solve = 0.0;
  double after_c_solve = 0.0;
  double after_projection = 0.0;
  double after_b_solve = 0.0;
  double after_b_rounding = 0.0;
};

struct Decomposition {
  BasisMatrix bm;
  CoefficientMatrix cm;
  bool degenerate = false;  // all-zero input: C = 0, B = identity rows
  std::vector<IterationTrace> trace;

  double reconstruction_error(const Eigen::MatrixXd& w) const;
};

std::size_t pruned_row_count(double sparsity_target, std::size_t n_rows);

/// SVD-initialised alternating projected least squares. Each iteration:
/// row-wise LS for C, prune the rows with the smallest ||c_i||*||w_i|| score,
/// power-of-2 quantize the survivors, refit B on surviving rows, snap B to
/// its fixed-point grid.
Decomposition decompose(const WeightStack& stack, const DecomposeOptions& options);

struct BitBudget {
  std::uint64_t bm_bits = 0;
  std::uint64_t cm_bits = 0;
  std::uint64_t index_bits = 0;

  std::uint64_t total() const { return bm_bits + cm_bits + index_bits; }
  bool operator==(const BitBudget&) const = default;
};

struct CompressedLayer {
  BasisMatrix bm;
  std::uint32_t n_rows = 0;
  std::int32_t exponent_bits = 4;
  std::int32_t scale_exponent = 0;
  std::vector<std::vector<Pow2>> nonzero_rows;
  std::vector<std::uint32_t> rle_index;  // zeros before each stored row, then the trailing run
  BitBudget bit_budget;

  std::uint32_t rank() const { return static_cast<std::uint32_t>(bm.rank()); }
  std::uint32_t width() const { return static_cast<std::uint32_t>(bm.width()); }
  int exponent_min() const { return scale_exponent - (1 << (exponent_bits - 1)); }
  int exponent_max() const { return scale_exponent + (1 << (exponent_bits - 1)) - 1; }
  /// For each original row: index into nonzero_rows, or -1 for a ZERO row.
  std::vector<std::int64_t> row_map() const;
  bool operator==(const CompressedLayer&) const = default;
};

/// Bits per stored CM entry: zero flag + sign + exponent code.
inline std::uint64_t cm_entry_bits(int exponent_bits) { return 2 + static_cast<std::uint64_t>(exponent_bits); }

CompressedLayer rle_encode(const CoefficientMatrix& cm, const BasisMatrix& bm);
CoefficientMatrix rle_decode(const CompressedLayer& layer);

// Serialized layout (all integers little-endian):
//   "IFC1" | u32 n | u32 r | u32 d | u8 exponent_bits | u8 bm_fraction_bits | i8 scale_exponent
//   BM section     r*d int16 words, row-major
//   index section  ULEB128 run lengths
//   CM section     stored rows, each entry {zero flag, sign, exponent code}, MSB-first, zero-padded to a byte
constexpr std::size_t kHeaderBytes = 19;

std::vector<std::uint8_t> serialize(const CompressedLayer& layer);
CompressedLayer deserialize(std::span<const std::uint8_t> bytes);

std::size_t uleb128_size(std::uint64_t value);
void uleb128_append(std::vector<std::uint8_t>& out, std::uint64_t value);

/// Restored fixed-point rows: value(i, j) = mantissa(i, j) * 2^binary_exponent.
struct RestoredRows {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> mantissa;
  int binary_exponent = 0;

  Eigen::MatrixXd to_dense() const;
};

/// Shift-and-add restore of rows [row_begin, row_end). Each stored row is
/// sum_j sign_j * (BM_j << (e_j - e_min)) in an integer accumulator carrying
/// fraction_bits - e_min fractional bits, which makes the result exact.
RestoredRows restore_rows(const BasisMatrix& bm, const CompressedLayer& layer, std::uint32_t row_begin,
                          std::uint32_t row_end);
RestoredRows restore_rows(const CompressedLayer& layer, std::uint32_t row_begin, std::uint32_t row_end);

struct DenseLayer {
  DenseWeights weights;
  std::uint32_t bits_per_weight = 8;

  std::uint64_t bits() const { return static_cast<std::uint64_t>(weights.size()) * bits_per_weight; }
};

/// Per-layer on-chip weight representation.
using LayerStorage = std::variant<CompressedLayer, DenseLayer>;

struct RankPolicy {
  enum class Mode { Half, Fraction, Fixed } mode = Mode::Half;
  double value = 0.5;
  std::vector<std::pair<std::size_t, int>> overrides;  // (layer index, rank)

  int rank_for(std::size_t layer_index, int width) const;
};

struct CompressionOptions {
  RankPolicy rank;
  double sparsity_target = 0.5;
  int exponent_bits = 4;
  int bm_fraction_bits = 8;
  int iters = 10;
  bool include_dw = false;
  std::uint32_t dense_weight_bits = 8;
};

CompressedLayer compress_layer(const LayerSpec& layer, const DenseWeights& weights, int rank,
                               const CompressionOptions& options, std::int32_t layer_id = 0);

std::vector<LayerStorage> compress_network(const netspec::NetworkSpec& net, std::span<const DenseWeights> weights,
                                           const CompressionOptions& options);

/// Dense weights of a layer as seen by the datapath (restored for compressed layers).
DenseWeights effective_weights(const LayerSpec& layer, const LayerStorage& storage);

struct LayerReport {
  std::size_t index = 0;
  LayerKind kind = LayerKind::Conv;
  bool compressed = false;
  std::uint64_t bm_bits = 0;
  std::uint64_t cm_bits = 0;
  std::uint64_t index_bits = 0;
  std::uint64_t dense_bits = 0;  // layers kept uncompressed
  std::uint64_t baseline_bits = 0;

  std::uint64_t total_bits() const { return bm_bits + cm_bits + index_bits + dense_bits; }
  double ratio() const;
};

struct CompressionReport {
  std::uint64_t total_bits = 0;
  std::uint64_t baseline_bits = 0;
  double ratio = 0.0;
  std::vector<LayerReport> layers;
};

CompressionReport compression_report(const netspec::NetworkSpec& net, std::span<const LayerStorage> storage,
                                     std::uint32_t weight_bits_baseline);
nlohmann::json report_to_json(const CompressionReport& report);

}  // namespace iflatcam::compress
