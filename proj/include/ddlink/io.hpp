// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/errors.hpp"
#include "ddlink/special.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace ddlink {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian; byte swapping is not implemented");

/// Append-only little-endian buffer. Files are written in one shot with a
/// trailing CRC-32 so readers can reject corruption before parsing.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    const std::vector<unsigned char>& bytes() const { return buf_; }

    void write_file_with_crc(const std::string& path) const {
        const std::uint32_t crc = crc32(buf_.data(), buf_.size());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
        if (!out) throw IoError("write failed for '" + path + "'");
    }

private:
    std::vector<unsigned char> buf_;
};

/// Whole-file reader that validates the trailing CRC-32 before any field is
/// parsed; a truncated or corrupted file never yields a partial object.
class ByteReader {
public:
    static ByteReader from_file_checked(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "' for reading");
        std::vector<unsigned char> all((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
        if (all.size() < sizeof(std::uint32_t))
            throw IoError("file '" + path + "' is truncated");
        std::uint32_t stored = 0;
        std::memcpy(&stored, all.data() + all.size() - sizeof stored, sizeof stored);
        all.resize(all.size() - sizeof stored);
        if (crc32(all.data(), all.size()) != stored)
            throw IoError("file '" + path + "' is corrupt (checksum mismatch)");
        return ByteReader(std::move(all));
    }

    std::uint8_t u8() { return take<std::uint8_t>(); }
    std::uint32_t u32() { return take<std::uint32_t>(); }
    std::uint64_t u64() { return take<std::uint64_t>(); }
    double f64() { return take<double>(); }
    std::string str() {
        const std::uint32_t n = u32();
        require(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void raw(void* p, std::size_t n) {
        require(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    explicit ByteReader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

    template <class T>
    T take() {
        T v{};
        raw(&v, sizeof v);
        return v;
    }
    void require(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw IoError("file ends unexpectedly while parsing");
    }

    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
};

} // namespace ddlink
