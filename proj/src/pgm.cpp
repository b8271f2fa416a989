#include "rkp/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "rkp/error.hpp"

namespace rkp {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int read_uint(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw FormatError("unexpected end of data in PGM header", pos_);
    if (!std::isdigit(bytes_[pos_]))
      throw FormatError(std::string("malformed PGM header: expected ") + what, pos_);
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000) throw FormatError(std::string("PGM ") + what + " too large", pos_);
      ++pos_;
    }
    return static_cast<int>(value);
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size()) throw FormatError("unexpected end of data in PGM header", pos_);
    if (!std::isspace(bytes_[pos_]))
      throw FormatError("malformed PGM header: expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PgmData parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw FormatError("unexpected end of data", bytes.size());
  if (bytes[0] != 'P' || bytes[1] != '5') throw FormatError("malformed PGM header: magic is not P5", 0);

  HeaderReader reader(bytes.subspan(2));
  PgmData pgm;
  pgm.width = reader.read_uint("width");
  pgm.height = reader.read_uint("height");
  pgm.maxval = reader.read_uint("maxval");
  const std::size_t header_end = 2 + reader.pos();
  if (pgm.width == 0 || pgm.height == 0) throw FormatError("PGM dimension is zero", header_end);
  if (pgm.maxval == 0 || pgm.maxval > 65535)
    throw FormatError("PGM maxval out of range", header_end);
  reader.expect_single_whitespace();

  const std::size_t data_start = 2 + reader.pos();
  const std::size_t bytes_per_sample = pgm.maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(pgm.width) * pgm.height;
  if (bytes.size() < data_start + count * bytes_per_sample)
    throw FormatError("unexpected end of data", bytes.size());

  pgm.samples.resize(count);
  const std::uint8_t* p = bytes.data() + data_start;
  for (std::size_t i = 0; i < count; ++i) {
    pgm.samples[i] = bytes_per_sample == 1
                         ? p[i]
                         : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  return pgm;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PgmData read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file_bytes(path)); }

Image2D to_image(const PgmData& pgm) {
  Image2D img(pgm.height, pgm.width);
  const double scale = 1.0 / pgm.maxval;
  for (int i = 0; i < pgm.width * pgm.height; ++i)
    img.data()[i] = std::min(1.0, pgm.samples[i] * scale);
  return img;
}

LabelMask to_mask(const PgmData& pgm) {
  LabelMask mask(pgm.height, pgm.width);
  for (int i = 0; i < pgm.width * pgm.height; ++i) mask.data()[i] = pgm.samples[i];
  return mask;
}

Image2D load_pgm_image(const std::filesystem::path& path) { return to_image(read_pgm(path)); }

LabelMask load_pgm_mask(const std::filesystem::path& path) { return to_mask(read_pgm(path)); }

std::vector<std::uint8_t> encode_pgm(const PgmData& pgm) {
  const std::string header = "P5\n" + std::to_string(pgm.width) + " " + std::to_string(pgm.height) +
                             "\n" + std::to_string(pgm.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = pgm.maxval > 255;
  out.reserve(out.size() + pgm.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t s : pgm.samples) {
    if (wide) out.push_back(static_cast<std::uint8_t>(s >> 8));
    out.push_back(static_cast<std::uint8_t>(s & 0xff));
  }
  return out;
}

void save_pgm(const Image2D& img, const std::filesystem::path& path, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("save_pgm: bits must be 8 or 16");
  PgmData pgm;
  pgm.width = static_cast<int>(img.cols());
  pgm.height = static_cast<int>(img.rows());
  pgm.maxval = bits == 8 ? 255 : 65535;
  pgm.samples.resize(img.size());
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    pgm.samples[i] = static_cast<std::uint16_t>(std::lround(v * pgm.maxval));
  }
  write_file_bytes(path, encode_pgm(pgm));
}

void save_pgm(const LabelMask& mask, const std::filesystem::path& path) {
  PgmData pgm;
  pgm.width = static_cast<int>(mask.cols());
  pgm.height = static_cast<int>(mask.rows());
  pgm.maxval = 65535;
  pgm.samples.resize(mask.size());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const auto v = mask.data()[i];
    if (v < 0 || v > 65535) throw std::invalid_argument("save_pgm: label outside 16-bit range");
    pgm.samples[i] = static_cast<std::uint16_t>(v);
  }
  write_file_bytes(path, encode_pgm(pgm));
}

}  // namespace rkp
