#include "wtfd/checkpoint.hpp"

#include <cstdint>
#include <cstring>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::ckpt {

namespace {
constexpr char kMagic[8] = {'T', 'E', 'N', 'S', 'R', 'C', 'K', 'P'};
}

void save(const std::filesystem::path& path, const std::vector<Entry>& entries) {
  std::string buf;
  buf.append(kMagic, 8);
  io::put_u32(buf, std::uint32_t(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff)
      throw ContractError("checkpoint entry name too long: " + e.name);
    if (e.shape.size() > 0xff)
      throw ContractError("checkpoint entry rank too large: " + e.name);
    if (e.data.size() != ag::numel(e.shape))
      throw ShapeError("checkpoint entry " + e.name + ": data length " +
                       std::to_string(e.data.size()) + " does not match shape " +
                       ag::shape_str(e.shape));
    io::put_u16(buf, std::uint16_t(e.name.size()));
    buf.append(e.name);
    buf.push_back(char(e.shape.size()));
    for (std::size_t d : e.shape) io::put_u32(buf, std::uint32_t(d));
    for (float v : e.data) io::put_f32(buf, v);
  }
  io::write_file(path, buf);
}

std::vector<Entry> load(const std::filesystem::path& path) {
  std::string buf = io::read_file(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw ParseError("not a checkpoint file: " + path.string());
  io::Reader r(buf, "checkpoint " + path.string(), 8);
  std::uint32_t count = r.u32();
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    std::uint16_t name_len = r.u16();
    e.name = std::string(r.bytes(name_len));
    std::uint8_t rank = r.u8();
    e.shape.resize(rank);
    for (std::uint8_t d = 0; d < rank; ++d) e.shape[d] = r.u32();
    std::size_t n = ag::numel(e.shape);
    e.data.resize(n);
    for (std::size_t j = 0; j < n; ++j) e.data[j] = r.f32();
    entries.push_back(std::move(e));
  }
  return entries;
}

const Entry* find(const std::vector<Entry>& entries, std::string_view name) {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <class T>
void append_params(std::vector<Entry>& out, const ag::ParamSet<T>& params,
                   const std::string& prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    Entry e;
    e.name = prefix + p.name;
    e.shape = p.shape;
    e.data.assign(p.value.begin(), p.value.end());
    out.push_back(std::move(e));
  }
}

template <class T>
void restore_params(const std::vector<Entry>& entries, ag::ParamSet<T>& params,
                    const std::string& prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    const Entry* e = find(entries, prefix + p.name);
    if (e == nullptr)
      throw ParseError("checkpoint missing parameter: " + prefix + p.name);
    if (e->shape != p.shape)
      throw ShapeError("checkpoint parameter " + p.name + ": shape " +
                       ag::shape_str(e->shape) + " does not match " +
                       ag::shape_str(p.shape));
    p.value.assign(e->data.begin(), e->data.end());
  }
}

template void append_params<float>(std::vector<Entry>&,
                                   const ag::ParamSet<float>&,
                                   const std::string&);
template void append_params<double>(std::vector<Entry>&,
                                    const ag::ParamSet<double>&,
                                    const std::string&);
template void restore_params<float>(const std::vector<Entry>&,
                                    ag::ParamSet<float>&, const std::string&);
template void restore_params<double>(const std::vector<Entry>&,
                                     ag::ParamSet<double>&, const std::string&);

}  // namespace wtfd::ckpt
