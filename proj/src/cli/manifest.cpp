#include "wtfd/manifest.hpp"

#include <charconv>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::cli {

const char* split_name(Split s) {
  switch (s) {
    case Split::labeled: return "labeled";
    case Split::unlabeled: return "unlabeled";
    case Split::test: return "test";
  }
  return "?";
}

namespace {

constexpr const char* kHeader = "path,class,split";

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& msg) {
  throw ParseError("manifest " + path.string() + ":" + std::to_string(line) +
                   ": " + msg);
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::string text = io::read_file(path);
  std::vector<ManifestRow> rows;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::string line = strip_cr(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line_no == 1) {
      if (line != kHeader)
        fail(path, 1, "expected header '" + std::string(kHeader) + "', got '" +
                          line + "'");
      continue;
    }
    if (line.empty()) continue;

    auto c1 = line.find(',');
    auto c2 = c1 == std::string::npos ? std::string::npos
                                      : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      fail(path, line_no, "expected 3 comma-separated fields");

    ManifestRow row;
    row.path = line.substr(0, c1);
    if (row.path.empty()) fail(path, line_no, "empty path");

    std::string cls = line.substr(c1 + 1, c2 - c1 - 1);
    std::uint16_t v = 0;
    auto res = std::from_chars(cls.data(), cls.data() + cls.size(), v);
    if (res.ec != std::errc() || res.ptr != cls.data() + cls.size())
      fail(path, line_no, "class is not a u16: '" + cls + "'");
    row.cls = v;

    std::string split = line.substr(c2 + 1);
    if (split == "labeled")
      row.split = Split::labeled;
    else if (split == "unlabeled")
      row.split = Split::unlabeled;
    else if (split == "test")
      row.split = Split::test;
    else
      fail(path, line_no, "unknown split '" + split + "'");
    rows.push_back(std::move(row));
  }
  if (line_no == 0) fail(path, 1, "empty file");
  if (rows.empty()) fail(path, 1, "no data rows");
  return rows;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRow>& rows) {
  std::string out = kHeader;
  out += "\n";
  for (const auto& r : rows) {
    out += r.path;
    out += ",";
    out += std::to_string(r.cls);
    out += ",";
    out += split_name(r.split);
    out += "\n";
  }
  io::write_file(path, out);
}

std::filesystem::path tfm_path(const std::filesystem::path& manifest_dir,
                               const ManifestRow& row) {
  std::filesystem::path p(row.path);
  return manifest_dir / "tfm" / (p.stem().string() + ".tfm");
}

}  // namespace wtfd::cli
