#include "beamloc/io.hpp"

#include <cstring>
#include <fstream>

namespace beamloc::io {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw NumericalError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_raw_f32(const std::filesystem::path& path, std::span<const double> samples) {
    std::string buf(samples.size() * 4, '\0');
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const float f = static_cast<float>(samples[i]);
        std::memcpy(buf.data() + 4 * i, &f, 4);
    }
    write_file_atomic(path, buf);
}

std::vector<double> read_raw_f32(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() % 4 != 0) throw InvalidArgument("raw f32 file has odd size: " + path.string());
    std::vector<double> out(buf.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, buf.data() + 4 * i, 4);
        out[i] = f;
    }
    return out;
}

Csv::Csv(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ << ',';
        out_ << header[i];
    }
    out_ << '\n';
}

std::uint64_t content_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace beamloc::io
