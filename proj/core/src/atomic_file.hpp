#pragma once

#include <filesystem>
#include <fstream>
#include <string_view>
#include <system_error>

#include "affinv/error.hpp"

namespace affinv {

/// Write-temp-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace affinv
