#pragma once

// Output records: a `#` header carrying the schema version and config hash,
// followed by a CSV body. Files are written atomically (temp + rename).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "optomech/cli/config.hpp"
#include "optomech/errors.hpp"

namespace optomech::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of everything that determines the numbers: the parsed entries in
/// canonical (sorted) order, the subcommand, seed and sweep direction.
/// Worker count and output location are excluded.
inline std::string config_hash(const RunConfig& cfg, const std::string& command, std::uint64_t seed,
                               model::SweepDirection dir) {
    std::vector<std::string> lines;
    for (const Entry& e : cfg.entries) {
        // Schedule order is significant; keep the line ordinal in the key.
        lines.push_back(e.section == "schedule" ? e.name() + "#" + std::to_string(lines.size()) + "=" + e.value
                                                : e.name() + "=" + e.value);
    }
    std::sort(lines.begin(), lines.end());
    std::string canon = "command=" + command + "\nseed=" + std::to_string(seed) + "\nsweep=" + model::to_string(dir) +
                        "\nversion=" + kArtifactVersion + "\n";
    for (const auto& l : lines) canon += l + "\n";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

inline std::string header(const std::string& command, const std::string& hash,
                          const std::vector<std::string>& extra = {}) {
    std::string h = "# optomech " + std::string(kArtifactVersion) + " schema=" + std::to_string(kSchemaVersion) + "\n";
    h += "# command=" + command + "\n";
    h += "# config_hash=" + hash + "\n";
    for (const auto& e : extra) h += "# " + e + "\n";
    return h;
}

/// Shortest round-trip decimal form.
inline std::string fmt(double v) {
    char buf[32];
    double back = 0.0;
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

class CsvBuilder {
public:
    explicit CsvBuilder(const std::vector<std::string>& columns) {
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << "\n";
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }

    std::ostringstream out_;
};

/// Writes `content` to `path` via a temporary sibling and rename, so readers
/// never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace optomech::cli
