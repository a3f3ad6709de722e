#include "mixehr/binary_matrix.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "mixehr/error.hpp"

namespace mixehr {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'X', 'L', 'M'};

void put_u32(char* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(const char* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

void put_f64(char* out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
}

double get_f64(const char* in) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (m.rows > kMax || m.cols > kMax)
        throw ValidationError("matrix too large for binary format: " + path.string());

    std::vector<char> buf(kMatrixHeaderBytes + 8 * m.data.size(), 0);
    std::memcpy(buf.data(), kMagic.data(), 4);
    put_u32(buf.data() + 4, static_cast<std::uint32_t>(m.rows));
    put_u32(buf.data() + 8, static_cast<std::uint32_t>(m.cols));
    char* p = buf.data() + kMatrixHeaderBytes;
    for (double x : m.data) {
        put_f64(p, x);
        p += 8;
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());

    std::array<char, kMatrixHeaderBytes> header{};
    in.read(header.data(), header.size());
    if (in.gcount() != static_cast<std::streamsize>(header.size()))
        throw IoError("truncated matrix header: " + path.string());
    if (std::memcmp(header.data(), kMagic.data(), 4) != 0)
        throw ValidationError("bad magic in matrix file: " + path.string());
    if (get_u32(header.data() + 12) != 0)
        throw ValidationError("nonzero reserved header field: " + path.string());

    Matrix m(get_u32(header.data() + 4), get_u32(header.data() + 8));
    std::vector<char> body(8 * m.data.size());
    in.read(body.data(), static_cast<std::streamsize>(body.size()));
    if (in.gcount() != static_cast<std::streamsize>(body.size()))
        throw IoError("truncated matrix body: " + path.string());
    if (in.peek() != std::char_traits<char>::eof())
        throw ValidationError("trailing bytes after matrix body: " + path.string());
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = get_f64(body.data() + 8 * i);
    return m;
}

}  // namespace mixehr
