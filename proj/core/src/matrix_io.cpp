#include "mipic/matrix_io.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mipic/errors.hpp"

namespace mipic {

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open matrix file " + path.string());
    std::vector<double> data;
    std::size_t rows = 0, cols = 0, number = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        for (char& ch : line) {
            if (ch == ',') ch = ' ';
        }
        const std::string where = path.string() + ":" + std::to_string(number);
        std::size_t count = 0;
        const char* p = line.c_str();
        while (*p) {
            while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
            if (!*p) break;
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p || (*end && *end != ' ' && *end != '\t' && *end != '\r')) {
                throw InputError(where + ": not a number near '" + std::string(p).substr(0, 16) + "'");
            }
            if (!std::isfinite(v)) throw InputError(where + ": non-finite value");
            data.push_back(v);
            ++count;
            p = end;
        }
        if (rows == 0) {
            cols = count;
        } else if (count != cols) {
            throw InputError(where + ": expected " + std::to_string(cols) + " values, found " + std::to_string(count));
        }
        ++rows;
    }
    if (rows == 0) throw InputError("matrix file " + path.string() + " has no rows");
    return Matrix(rows, cols, std::move(data));
}

}  // namespace mipic
