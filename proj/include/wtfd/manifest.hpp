// Dataset manifest: CSV `path,class,split` with paths relative to the
// manifest's directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wtfd::cli {

enum class Split { labeled, unlabeled, test };
const char* split_name(Split s);

struct ManifestRow {
  std::string path;  // relative to the manifest directory
  std::uint16_t cls = 0;
  Split split = Split::unlabeled;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRow>& rows);

// Preprocessed map for a manifest row: <dir>/tfm/<stem>.tfm.
std::filesystem::path tfm_path(const std::filesystem::path& manifest_dir,
                               const ManifestRow& row);

}  // namespace wtfd::cli
