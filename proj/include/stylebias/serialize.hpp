#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stylebias/errors.hpp"

namespace stylebias {

// Little-endian binary writer/reader for self-describing weight files.
class BinaryWriter {
  public:
    explicit BinaryWriter(const std::filesystem::path& file) : out_(file, std::ios::binary) {
        if (!out_) throw IngestError("cannot open for writing: " + file.string());
    }
    void u8(std::uint8_t v) { out_.write(reinterpret_cast<const char*>(&v), 1); }
    void u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
    void u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
    void i32(std::int32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void floats(const std::vector<float>& v) {
        u64(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()),
                   static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    bool good() const { return out_.good(); }

  private:
    std::ofstream out_;
};

class BinaryReader {
  public:
    explicit BinaryReader(const std::filesystem::path& file) : in_(file, std::ios::binary) {
        if (!in_) throw IngestError("cannot open for reading: " + file.string());
    }
    std::uint8_t u8() { std::uint8_t v; read(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; read(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; read(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; read(&v, 4); return v; }
    std::string str() {
        std::string s(u32(), '\0');
        read(s.data(), s.size());
        return s;
    }
    std::vector<float> floats() {
        std::vector<float> v(u64());
        read(v.data(), v.size() * sizeof(float));
        return v;
    }

  private:
    void read(void* dst, std::size_t n) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!in_) throw IngestError("truncated weight file");
    }
    std::ifstream in_;
};

}  // namespace stylebias
