#pragma once

#include <qrkit/core/structured_matrix.hpp>

#include <charconv>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace qrkit {

/// Reads `%%MatrixMarket matrix coordinate real general` (1-based indices).
template <RealScalar Scalar>
TripletMatrix<Scalar> read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty Matrix Market stream", 1);
  ++lineno;
  {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    auto lower = [](std::string s) {
      for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return s;
    };
    if (banner != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate") {
      throw ParseError("expected '%%MatrixMarket matrix coordinate ...' header", lineno);
    }
    if (lower(field) != "real" || lower(symmetry) != "general") {
      throw ParseError("only 'real general' coordinate matrices are supported", lineno);
    }
  }
  // Skip comments up to the size line.
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] != '%') break;
  }
  Index rows = 0, cols = 0, nnz = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
      throw ParseError("malformed size line", lineno);
    }
  }
  TripletMatrix<Scalar> m(rows, cols);
  m.reserve(static_cast<std::size_t>(nnz));
  Index read = 0;
  while (read < nnz && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream es(line);
    Index i = 0, j = 0;
    double v = 0;
    if (!(es >> i >> j >> v)) throw ParseError("malformed entry", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("entry index out of range", lineno);
    m.add(i - 1, j - 1, static_cast<Scalar>(v));
    ++read;
  }
  if (read != nnz) throw ParseError("expected " + std::to_string(nnz) + " entries, found " + std::to_string(read), lineno);
  return m;
}

template <RealScalar Scalar>
void write_matrix_market(std::ostream& out, const TripletMatrix<Scalar>& m) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonzeros() << '\n';
  const auto precision = out.precision(std::numeric_limits<Scalar>::max_digits10);
  for (const auto& t : m.entries()) out << t.row + 1 << ' ' << t.col + 1 << ' ' << t.value << '\n';
  out.precision(precision);
}

}  // namespace qrkit
