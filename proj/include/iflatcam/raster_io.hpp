#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace iflatcam::io {

// Raw container: 16-byte header {magic "IFCM", u32 rows, u32 cols, u32 reserved = 0}
// followed by rows*cols little-endian IEEE-754 binary64 values in row-major order.
constexpr std::size_t kRawHeaderBytes = 16;

std::vector<std::uint8_t> encode_raw(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_raw(const std::vector<std::uint8_t>& bytes);
void write_raw(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_raw(const std::filesystem::path& path);

// Binary PGM (P5), 8-bit. Values are clamped to [0,1] and mapped to 0..255
// with round-half-away-from-zero; reading maps back by dividing by maxval.
std::vector<std::uint8_t> encode_pgm(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_pgm(const std::vector<std::uint8_t>& bytes);
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_pgm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace iflatcam::io
