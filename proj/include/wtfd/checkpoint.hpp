// Checkpoint container: named f32 tensors in a flat binary file.
// Layout: magic "TENSRCKP", u32 entry count, then per entry
// u16 name length, name bytes, u8 rank, rank x u32 dims, f32 payload.
// All integers and floats little-endian.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wtfd/tensor.hpp"

namespace wtfd::ckpt {

struct Entry {
  std::string name;
  ag::Shape shape;
  std::vector<float> data;
};

void save(const std::filesystem::path& path, const std::vector<Entry>& entries);
std::vector<Entry> load(const std::filesystem::path& path);

const Entry* find(const std::vector<Entry>& entries, std::string_view name);

// ParamSet bridging. Values are stored as f32 regardless of T.
template <class T>
void append_params(std::vector<Entry>& out, const ag::ParamSet<T>& params,
                   const std::string& prefix = "");
template <class T>
void restore_params(const std::vector<Entry>& entries, ag::ParamSet<T>& params,
                    const std::string& prefix = "");

extern template void append_params<float>(std::vector<Entry>&,
                                          const ag::ParamSet<float>&,
                                          const std::string&);
extern template void append_params<double>(std::vector<Entry>&,
                                           const ag::ParamSet<double>&,
                                           const std::string&);
extern template void restore_params<float>(const std::vector<Entry>&,
                                           ag::ParamSet<float>&,
                                           const std::string&);
extern template void restore_params<double>(const std::vector<Entry>&,
                                            ag::ParamSet<double>&,
                                            const std::string&);

}  // namespace wtfd::ckpt
