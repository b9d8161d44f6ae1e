// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "patchscaler/error.hpp"

namespace patchscaler::detail {

/// Little-endian serialization into an in-memory buffer.
class ByteWriter {
public:
    void put_bytes(std::string_view bytes) { m_buffer.insert(m_buffer.end(), bytes.begin(), bytes.end()); }

    void put_u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) m_buffer.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }

    void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

    const std::vector<char>& buffer() const noexcept { return m_buffer; }

private:
    std::vector<char> m_buffer;
};

class ByteReader {
public:
    ByteReader(std::vector<char> buffer, std::string source) : m_buffer(std::move(buffer)), m_source(std::move(source)) {}

    std::string get_bytes(std::size_t n) {
        require(n);
        std::string out(m_buffer.data() + m_pos, n);
        m_pos += n;
        return out;
    }

    std::uint32_t get_u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(m_buffer[m_pos + i])) << (8 * i);
        }
        m_pos += 4;
        return v;
    }

    float get_f32() { return std::bit_cast<float>(get_u32()); }

    std::size_t remaining() const noexcept { return m_buffer.size() - m_pos; }
    const std::string& source() const noexcept { return m_source; }

    void require(std::size_t n) const {
        if (remaining() < n) {
            throw IoError(IoErrorKind::truncated, m_source + ": needed " + std::to_string(n) + " bytes at offset " +
                                                      std::to_string(m_pos) + ", " + std::to_string(remaining()) +
                                                      " left");
        }
    }

private:
    std::vector<char> m_buffer;
    std::string m_source;
    std::size_t m_pos = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace patchscaler::detail
