#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jbm/mat.hpp"
#include "jbm/param.hpp"

namespace jbm {

enum class Modality : uint8_t { Visual = 0, Textual = 1 };

inline const char* modality_name(Modality m) { return m == Modality::Visual ? "visual" : "textual"; }

// Feature-file format (little-endian, bit-exact):
//   magic "JBMF" | u32 version=1 | u32 rows | u32 cols | u8 modality tag | 3 pad bytes
//   rows*cols float32, row-major
void write_feature_file(const std::string& path, const MatF& m, Modality tag);

struct FeatureFile {
    MatF matrix;
    Modality tag;
};

// Throws FormatError on bad magic/version/tag or truncation (never a partial load).
FeatureFile read_feature_file(const std::string& path);

// Checkpoint container:
//   magic "JBMC" | u32 version=1 | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rows | u32 cols | float32 data
void write_checkpoint_tensors(const std::string& path, const std::vector<const Parameter*>& tensors);
std::vector<Parameter> read_checkpoint_tensors(const std::string& path);

// FNV-1a over file bytes; used for dataset fingerprints in manifests.
uint64_t file_fingerprint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace jbm
