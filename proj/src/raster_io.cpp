#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <tuple>

#include "mscd/error.hpp"
#include "mscd/raster.hpp"

namespace mscd {

namespace {

// Largest accepted sample count; guards allocations driven by file headers.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 32;

void check_dims(Raster::Index rows, Raster::Index cols, Raster::Index bands) {
  if (rows <= 0 || cols <= 0 || bands <= 0) {
    throw ShapeError("raster dimensions must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols) + "x" + std::to_string(bands));
  }
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

/// Cursor over a header made of whitespace-separated ASCII tokens.
class HeaderReader {
 public:
  HeaderReader(std::span<const unsigned char> bytes, bool allow_comments)
      : bytes_(bytes), allow_comments_(allow_comments) {}

  std::size_t offset() const { return pos_; }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (allow_comments_ && c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what, std::uint64_t max_value) {
    skip_space();
    const std::size_t start = pos_;
    std::uint64_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > max_value) throw FormatError(std::string(what) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("expected ") + what, start);
    return value;
  }

  void expect_single_space(const char* what) {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError(std::string("expected whitespace after ") + what, pos_);
    }
    ++pos_;
  }

  void expect(char c, const char* what) {
    if (pos_ >= bytes_.size() || bytes_[pos_] != static_cast<unsigned char>(c)) {
      throw FormatError(std::string("expected ") + what, pos_);
    }
    ++pos_;
  }

 private:
  std::span<const unsigned char> bytes_;
  bool allow_comments_;
  std::size_t pos_ = 0;
};

std::uint64_t checked_count(std::uint64_t rows, std::uint64_t cols, std::uint64_t bands,
                            std::size_t offset) {
  if (rows == 0 || cols == 0 || bands == 0) throw FormatError("zero dimension in header", offset);
  if (rows > kMaxSamples / cols || rows * cols > kMaxSamples / bands) {
    throw FormatError("dimension overflow", offset);
  }
  return rows * cols * bands;
}

Raster load_rf32(std::span<const unsigned char> bytes) {
  HeaderReader reader(bytes, false);
  for (char c : std::string("RF32")) reader.expect(c, "RF32 magic");
  reader.expect(' ', "space after magic");
  const auto rows = reader.number("rows", kMaxSamples);
  reader.expect(' ', "space after rows");
  const auto cols = reader.number("cols", kMaxSamples);
  reader.expect(' ', "space after cols");
  const auto bands = reader.number("bands", kMaxSamples);
  const std::size_t dims_end = reader.offset();
  reader.expect('\n', "newline after header");
  const auto count = checked_count(rows, cols, bands, dims_end);

  const std::size_t payload = reader.offset();
  const std::uint64_t needed = count * 4;
  if (bytes.size() - payload < needed) {
    throw FormatError("truncated payload: expected " + std::to_string(needed) + " bytes, found " +
                          std::to_string(bytes.size() - payload),
                      bytes.size());
  }
  if (bytes.size() - payload > needed) throw FormatError("trailing bytes after payload", payload + needed);

  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const unsigned char* p = bytes.data() + payload + 4 * i;
    const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                               (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
    data[i] = std::bit_cast<float>(bits);
    if (!std::isfinite(data[i])) throw FormatError("non-finite sample", payload + 4 * i);
  }
  return Raster(static_cast<Raster::Index>(rows), static_cast<Raster::Index>(cols),
                static_cast<Raster::Index>(bands), std::move(data));
}

Raster load_netpbm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("missing netpbm magic", 0);
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw FormatError(std::string("unsupported netpbm type P") + kind, 1);
  }
  const bool binary = kind == '5' || kind == '6';
  const std::uint64_t bands = (kind == '3' || kind == '6') ? 3 : 1;

  HeaderReader reader(bytes.subspan(0), true);
  reader.expect('P', "P");
  reader.expect(kind, "type");
  const auto cols = reader.number("width", kMaxSamples);
  const auto rows = reader.number("height", kMaxSamples);
  const auto maxval = reader.number("maxval", 65535);
  if (maxval == 0) throw FormatError("maxval must be positive", reader.offset());
  const auto count = checked_count(rows, cols, bands, reader.offset());
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;

  std::vector<float> data(count);
  const auto scale = 1.0f / static_cast<float>(maxval);
  auto store = [&](std::uint64_t sample_index, std::uint64_t value, std::size_t offset) {
    if (value > maxval) throw FormatError("sample exceeds maxval", offset);
    // File order is pixel-interleaved; storage is band-sequential.
    const std::uint64_t pixel = sample_index / bands;
    const std::uint64_t band = sample_index % bands;
    data[band * rows * cols + pixel] = static_cast<float>(value) * scale;
  };

  if (binary) {
    reader.expect_single_space("maxval");
    const std::size_t payload = reader.offset();
    const std::uint64_t needed = count * sample_bytes;
    if (bytes.size() - payload < needed) {
      throw FormatError("truncated payload: expected " + std::to_string(needed) + " bytes, found " +
                            std::to_string(bytes.size() - payload),
                        bytes.size());
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::size_t at = payload + i * sample_bytes;
      const std::uint64_t value =
          sample_bytes == 1 ? bytes[at] : (std::uint64_t{bytes[at]} << 8) | bytes[at + 1];
      store(i, value, at);
    }
  } else {
    for (std::uint64_t i = 0; i < count; ++i) {
      reader.skip_space();
      const std::size_t at = reader.offset();
      if (at >= bytes.size()) throw FormatError("truncated payload", at);
      store(i, reader.number("sample", 65535), at);
    }
  }
  return Raster(static_cast<Raster::Index>(rows), static_cast<Raster::Index>(cols),
                static_cast<Raster::Index>(bands), std::move(data));
}

std::string extension_of(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

Raster::Raster(Index rows, Index cols, Index bands) : rows_(rows), cols_(cols), bands_(bands) {
  check_dims(rows, cols, bands);
  data_.assign(static_cast<std::size_t>(rows * cols * bands), 0.0f);
}

Raster::Raster(Index rows, Index cols, Index bands, const std::vector<float>& data)
    : rows_(rows), cols_(cols), bands_(bands), data_(data.begin(), data.end()) {
  check_dims(rows, cols, bands);
  if (data_.size() != static_cast<std::size_t>(rows * cols * bands)) {
    throw ShapeError("raster data has " + std::to_string(data_.size()) + " samples, expected " +
                     std::to_string(rows * cols * bands));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw Error("raster contains a non-finite sample");
  }
}

Raster load_raster(const std::filesystem::path& path) {
  const std::string ext = extension_of(path);
  if (ext != ".rf32" && ext != ".pgm" && ext != ".ppm") {
    throw Error("unsupported raster extension '" + ext + "' for " + path.string());
  }
  const auto bytes = read_bytes(path);
  try {
    return ext == ".rf32" ? load_rf32(bytes) : load_netpbm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_raster(const Raster& raster, const std::filesystem::path& path) {
  if (raster.empty()) throw Error("cannot save an empty raster");
  const std::string ext = extension_of(path);
  std::vector<unsigned char> bytes;
  if (ext == ".rf32") {
    const std::string header = "RF32 " + std::to_string(raster.rows()) + " " +
                               std::to_string(raster.cols()) + " " +
                               std::to_string(raster.bands()) + "\n";
    bytes.assign(header.begin(), header.end());
    bytes.reserve(header.size() + raster.data().size() * 4);
    for (float v : raster.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<unsigned char>(bits >> shift));
    }
  } else if (ext == ".pgm" || ext == ".ppm") {
    const Raster::Index channels = ext == ".pgm" ? 1 : 3;
    if (raster.bands() != channels) {
      throw ShapeError(ext + " output needs " + std::to_string(channels) + " band(s), raster has " +
                       std::to_string(raster.bands()));
    }
    const std::string header = std::string(channels == 1 ? "P5\n" : "P6\n") +
                               std::to_string(raster.cols()) + " " + std::to_string(raster.rows()) +
                               "\n255\n";
    bytes.assign(header.begin(), header.end());
    for (Raster::Index r = 0; r < raster.rows(); ++r) {
      for (Raster::Index c = 0; c < raster.cols(); ++c) {
        for (Raster::Index b = 0; b < channels; ++b) {
          const float v = std::clamp(raster.at(r, c, b), 0.0f, 1.0f);
          bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
        }
      }
    }
  } else {
    throw Error("unsupported raster extension '" + ext + "' for " + path.string());
  }
  write_bytes(path, bytes);
}

Raster replicate_band(const Raster& raster) {
  if (raster.bands() != 1) {
    throw ShapeError("replicate_band needs a single-band raster, got " +
                     std::to_string(raster.bands()) + " bands");
  }
  Raster out(raster.rows(), raster.cols(), 3);
  for (Raster::Index b = 0; b < 3; ++b) out.band(b) = raster.band(0);
  return out;
}

SceneStats band_stats(const Raster& raster) {
  SceneStats stats;
  for (Raster::Index b = 0; b < raster.bands(); ++b) {
    const Eigen::ArrayXd band = raster.band(b).cast<double>();
    const double mean = band.mean();
    const double var = (band - mean).square().mean();
    stats.push_back({static_cast<float>(mean), static_cast<float>(std::sqrt(var))});
  }
  return stats;
}

std::pair<Raster, SceneStats> standardize(const Raster& raster) {
  Raster out(raster.rows(), raster.cols(), raster.bands());
  SceneStats stats;
  for (Raster::Index b = 0; b < raster.bands(); ++b) {
    const Eigen::ArrayXd band = raster.band(b).cast<double>();
    const double mean = band.mean();
    const bool constant = (band == band(0)).all();
    const double stddev = constant ? 0.0 : std::sqrt((band - mean).square().mean());
    if (constant || stddev == 0.0) {
      out.band(b).setZero();
      stats.push_back({static_cast<float>(mean), 0.0f});
    } else {
      out.band(b) = ((band - mean) / stddev).cast<float>();
      stats.push_back({static_cast<float>(mean), static_cast<float>(stddev)});
    }
  }
  return {std::move(out), std::move(stats)};
}

Raster to_decibels(const Raster& raster, float eps) {
  Raster out(raster.rows(), raster.cols(), raster.bands());
  auto src = raster.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] < 0.0f) throw Error("decibel transform needs non-negative samples");
    dst[i] = 10.0f * std::log10(src[i] + eps);
  }
  return out;
}

PreparedPair prepare_pair(const Raster& optical, const Raster& sar, bool sar_decibels) {
  if (!optical.same_dims(sar)) {
    throw ShapeError("optical image is " + std::to_string(optical.rows()) + "x" + std::to_string(optical.cols()) +
                     ", SAR image is " + std::to_string(sar.rows()) + "x" + std::to_string(sar.cols()));
  }
  auto to_three = [](const Raster& r, const char* what) {
    if (r.bands() == 1) return replicate_band(r);
    if (r.bands() == 3) return r;
    throw ShapeError(std::string(what) + " image must have 1 or 3 bands, got " + std::to_string(r.bands()));
  };
  PreparedPair pair;
  std::tie(pair.optical, pair.optical_stats) = standardize(to_three(optical, "optical"));
  std::tie(pair.sar, pair.sar_stats) = standardize(to_three(sar_decibels ? to_decibels(sar) : sar, "SAR"));
  return pair;
}

}  // namespace mscd
