#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "satmetro/estimator.hpp"

namespace satmetro {

class FrameIoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path &path, std::string_view content);

/// `<pool>.meta.json` next to a pool CSV.
std::filesystem::path metadata_path(const std::filesystem::path &pool_csv);

/// Pool CSV (`frame_index,pixel_index,electrons`, one row per pixel read-out,
/// `#` comment lines first) plus its JSON metadata sidecar.
void write_pool(const std::filesystem::path &pool_csv, const FrameSet &pool,
                std::string_view header_comment = {});
/// Reads a pool and its sidecar; every (frame, pixel) pair must appear exactly once.
FrameSet read_pool(const std::filesystem::path &pool_csv);

std::string hex64(std::uint64_t v);

} // namespace satmetro
