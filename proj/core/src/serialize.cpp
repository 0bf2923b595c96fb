#include "rdt/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rdt/error.hpp"
#include "rdt/tensor.hpp"

namespace rdt {

namespace {

constexpr char kMagic[] = "rdtt";
constexpr int kVersion = 1;

std::size_t element_count(const std::vector<int>& shape) {
  if (shape.empty()) throw ParseError("array container: empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0)
      throw ParseError("array container: non-positive dimension " +
                       std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_token(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<int> parse_shape_token(const std::string& token) {
  std::vector<int> shape;
  std::size_t pos = 0;
  while (pos <= token.size()) {
    std::size_t next = token.find('x', pos);
    if (next == std::string::npos) next = token.size();
    const std::string piece = token.substr(pos, next - pos);
    if (piece.empty())
      throw ParseError("array container: malformed shape '" + token + "'");
    try {
      shape.push_back(std::stoi(piece));
    } catch (const std::exception&) {
      throw ParseError("array container: malformed shape '" + token + "'");
    }
    pos = next + 1;
    if (next == token.size()) break;
  }
  element_count(shape);  // validates positivity
  return shape;
}

void put_f64_le(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]))
            << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_arrays(std::ostream& out, std::span<const NamedArray> arrays) {
  std::ostringstream header;
  header << kMagic << ' ' << kVersion << ' ' << arrays.size() << '\n';
  std::string payload;
  std::size_t offset = 0;
  for (const NamedArray& a : arrays) {
    if (a.name.empty() ||
        a.name.find_first_of(" \t\r\n") != std::string::npos)
      throw ParseError("array container: invalid array name '" + a.name + "'");
    const std::size_t n = element_count(a.shape);
    if (n != a.data.size())
      throw ShapeError("array container: '" + a.name + "' shape " +
                       shape_str(a.shape) + " does not match " +
                       std::to_string(a.data.size()) + " values");
    header << a.name << ' ' << shape_token(a.shape) << " f64 " << offset
           << '\n';
    for (double v : a.data) put_f64_le(payload, v);
    offset += 8 * n;
  }
  out << header.str();
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("array container: write failed");
}

std::vector<NamedArray> read_arrays(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("array container: missing header");
  std::istringstream first(line);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(first >> magic >> version >> count) || magic != kMagic)
    throw ParseError("array container: bad magic line '" + line + "'");
  if (version != kVersion)
    throw ParseError("array container: unsupported version " +
                     std::to_string(version));

  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw ParseError("array container: truncated header at entry " +
                       std::to_string(i + 1));
    std::istringstream ls(line);
    Entry e;
    std::string shape_tok, dtype;
    if (!(ls >> e.name >> shape_tok >> dtype >> e.offset))
      throw ParseError("array container: malformed entry '" + line + "'");
    if (dtype != "f64")
      throw ParseError("array container: unsupported dtype '" + dtype + "'");
    e.shape = parse_shape_token(shape_tok);
    entries.push_back(std::move(e));
  }

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::vector<NamedArray> arrays;
  arrays.reserve(entries.size());
  for (const Entry& e : entries) {
    const std::size_t n = element_count(e.shape);
    if (e.offset + 8 * n > payload.size())
      throw ParseError("array container: '" + e.name +
                       "' payload out of range");
    NamedArray a;
    a.name = e.name;
    a.shape = e.shape;
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      a.data[i] = get_f64_le(payload.data() + e.offset + 8 * i);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void write_arrays_file(const std::string& path,
                       std::span<const NamedArray> arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_arrays(out, arrays);
}

std::vector<NamedArray> read_arrays_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_arrays(in);
}

}  // namespace rdt
