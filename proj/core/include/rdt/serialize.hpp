#ifndef RDT_SERIALIZE_HPP_
#define RDT_SERIALIZE_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace rdt {

// A named dense f64 array, the unit of the on-disk container format.
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

// Self-describing array container:
//
//   rdtt 1 <count>
//   <name> <d0>x<d1>x... f64 <byte-offset>     (count lines)
//   <raw little-endian f64 payload>
//
// Offsets index into the payload, which starts on the byte after the last
// header newline. Names must be non-empty and free of whitespace.
void write_arrays(std::ostream& out, std::span<const NamedArray> arrays);
std::vector<NamedArray> read_arrays(std::istream& in);

void write_arrays_file(const std::string& path,
                       std::span<const NamedArray> arrays);
std::vector<NamedArray> read_arrays_file(const std::string& path);

}  // namespace rdt

#endif  // RDT_SERIALIZE_HPP_
