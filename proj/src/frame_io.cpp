#include "satmetro/frame_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace satmetro {
namespace {

using json = nlohmann::json;

std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FrameIoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template <class T> T parse_field(std::string_view text, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FrameIoError("pool line " + std::to_string(line) + ": bad field '" +
                       std::string(text) + "'");
  return value;
}

json extinction_json(double er) { return std::isinf(er) ? json("inf") : json(er); }

} // namespace

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text_atomic(const std::filesystem::path &path, std::string_view content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw FrameIoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out)
      throw FrameIoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw FrameIoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                       ec.message());
  }
}

std::filesystem::path metadata_path(const std::filesystem::path &pool_csv) {
  std::filesystem::path meta = pool_csv;
  meta += ".meta.json";
  return meta;
}

void write_pool(const std::filesystem::path &pool_csv, const FrameSet &pool,
                std::string_view header_comment) {
  pool.validate();
  std::string csv;
  csv.reserve(pool.frames.size() * pool.pixel_count() * 14 + 256);
  if (!header_comment.empty())
    csv.append(header_comment);
  csv += "frame_index,pixel_index,electrons\n";
  char buf[64];
  for (std::size_t f = 0; f < pool.frames.size(); ++f) {
    const auto &e = pool.frames[f].electrons;
    for (std::size_t j = 0; j < e.size(); ++j) {
      const int n = std::snprintf(buf, sizeof buf, "%zu,%zu,%d\n", f, j, e[j]);
      csv.append(buf, static_cast<std::size_t>(n));
    }
  }
  const Provenance &p = pool.provenance;
  json meta = {{"scheme", std::string(to_string(p.scheme.scheme))},
               {"epsilon", p.scheme.epsilon},
               {"bias_order", p.scheme.bias_order},
               {"extinction_ratio", extinction_json(p.scheme.extinction_ratio)},
               {"photons", p.photons},
               {"field_tesla", p.field_tesla},
               {"seed", p.seed},
               {"detector_hash", hex64(p.detector_hash)},
               {"frames", pool.frames.size()},
               {"pixels", pool.pixel_count()}};
  write_text_atomic(metadata_path(pool_csv), meta.dump(2) + "\n");
  write_text_atomic(pool_csv, csv);
}

FrameSet read_pool(const std::filesystem::path &pool_csv) {
  FrameSet pool;
  json meta;
  try {
    meta = json::parse(read_text(metadata_path(pool_csv)));
    Provenance &p = pool.provenance;
    p.scheme.scheme = scheme_from_string(meta.at("scheme").get<std::string>());
    p.scheme.epsilon = meta.at("epsilon").get<double>();
    p.scheme.bias_order = meta.at("bias_order").get<int>();
    const json &er = meta.at("extinction_ratio");
    p.scheme.extinction_ratio =
        er.is_string() ? std::numeric_limits<double>::infinity() : er.get<double>();
    p.photons = meta.at("photons").get<double>();
    p.field_tesla = meta.at("field_tesla").get<double>();
    p.seed = meta.at("seed").get<std::uint64_t>();
    p.detector_hash = std::stoull(meta.at("detector_hash").get<std::string>(), nullptr, 16);
  } catch (const FrameIoError &) {
    throw;
  } catch (const std::exception &e) {
    throw FrameIoError("bad pool metadata for " + pool_csv.string() + ": " + e.what());
  }
  const auto frames = meta.at("frames").get<std::size_t>();
  const auto pixels = meta.at("pixels").get<std::size_t>();
  if (frames == 0 || pixels == 0)
    throw FrameIoError("pool metadata declares an empty pool");

  const std::string text = read_text(pool_csv);
  pool.frames.assign(frames, Frame{std::vector<int>(pixels, -1)});
  std::size_t rows = 0, line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos)
      end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty() || line.front() == '#')
      continue;
    if (!header_seen) {
      if (line != "frame_index,pixel_index,electrons")
        throw FrameIoError("pool header must be 'frame_index,pixel_index,electrons'");
      header_seen = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw FrameIoError("pool line " + std::to_string(line_no) + ": expected three fields");
    const auto f = parse_field<std::size_t>(line.substr(0, c1), line_no);
    const auto j = parse_field<std::size_t>(line.substr(c1 + 1, c2 - c1 - 1), line_no);
    const auto k = parse_field<int>(line.substr(c2 + 1), line_no);
    if (f >= frames || j >= pixels)
      throw FrameIoError("pool line " + std::to_string(line_no) + ": index out of range");
    if (k < 0)
      throw FrameIoError("pool line " + std::to_string(line_no) + ": negative electron count");
    int &slot = pool.frames[f].electrons[j];
    if (slot >= 0)
      throw FrameIoError("pool line " + std::to_string(line_no) + ": duplicate read-out");
    slot = k;
    ++rows;
  }
  if (!header_seen)
    throw FrameIoError("pool file has no header row");
  if (rows != frames * pixels)
    throw FrameIoError("pool is missing read-outs: expected " + std::to_string(frames * pixels) +
                       " rows, found " + std::to_string(rows));
  return pool;
}

} // namespace satmetro
