#pragma once

#include <iosfwd>
#include <string>

#include "cpr/params.hpp"

namespace cpr {

// Binary tensor checkpoint:
//   magic "CPRCKPT1" | u32 version | u64 step | u64 header_len | header bytes
//   | u64 count | per tensor: u64 name_len, name, u64 rank, u64 dims[rank],
//   f64 data[prod(dims)]
// Integers and doubles are little-endian. Round-trips bit-exactly.
struct Checkpoint {
  std::string header;  // free-form, typically JSON describing the architecture
  ParamStore params;
};

void write_checkpoint(std::ostream& out, const ParamStore& params, const std::string& header);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ParamStore& params, const std::string& header);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cpr
