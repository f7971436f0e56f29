#pragma once

#include <filesystem>
#include <sstream>

#include "beamloc/common.hpp"

namespace beamloc::io {

/// Write-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Raw little-endian float32 samples (sidecar metadata written by callers).
void write_raw_f32(const std::filesystem::path& path, std::span<const double> samples);
std::vector<double> read_raw_f32(const std::filesystem::path& path);

/// Minimal CSV assembly; numbers are printed with round-trip precision.
class Csv {
  public:
    explicit Csv(const std::vector<std::string>& header);

    template <typename... Ts>
    void row(const Ts&... vals) {
        bool first = true;
        ((cell(vals, first), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

  private:
    template <typename T>
    void cell(const T& v, bool first) {
        if (!first) out_ << ',';
        if constexpr (std::is_floating_point_v<T>) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.12g", static_cast<double>(v));
            out_ << buf;
        } else {
            out_ << v;
        }
    }

    std::ostringstream out_;
};

/// FNV-1a over the canonical config text; recorded in report provenance.
std::uint64_t content_hash(const std::string& text);

}  // namespace beamloc::io
