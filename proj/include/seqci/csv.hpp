// Tiny deterministic CSV writer. Doubles are printed with shortest
// round-trip formatting (std::to_chars), so equal values always produce
// identical bytes.
#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include "seqci/common.hpp"

namespace seqci {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw DataError("csv: cannot open " + path + " for writing");
        path_ = path;
    }

    template <class... Ts>
    void row(const Ts&... fields) {
        bool first = true;
        (write_field(fields, first), ...);
        out_ << '\n';
        if (!out_) throw DataError("csv: write failed for " + path_);
    }

private:
    template <class T>
    void write_field(const T& v, bool& first) {
        if (!first) out_ << ',';
        first = false;
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, float>) {
            out_ << format_double(static_cast<double>(v));
        } else {
            out_ << v;
        }
    }

    std::ofstream out_;
    std::string path_;
};

}  // namespace seqci
