#pragma once

// Little-endian POD streaming shared by the binary file formats.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "lumidiff/error.hpp"

namespace lumidiff::detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw LoadError("unexpected end of file");
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::uint64_t max_len = (1ull << 30)) {
    const auto n = read_pod<std::uint64_t>(is);
    if (n > max_len) throw LoadError("string length out of range");
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw LoadError("unexpected end of file");
    return s;
}

inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t n) {
    std::vector<double> v(n);
    if (n > 0 && !is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
        throw LoadError("unexpected end of file");
    return v;
}

}  // namespace lumidiff::detail
