#pragma once

// Checkpoint file layout:
//
//   GATTA1\n
//   arch toy_cnn <h> <w> <c_in> <conv1> <conv2> <conv3> <hidden> <classes>\n
//   attention_dim <d or 0>\n
//   tensors <count>\n
//   tensor <name> <byte offset> <rank> <dims...>\n   (one per tensor)
//   payload_bytes <n>\n
//   end\n
//   <payload: little-endian float32, tensors concatenated in directory order>
//
// Backbone tensors always come first, so the backbone part of the payload is
// byte-identical between a backbone checkpoint and any attention checkpoint
// built on top of it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatta/attention.hpp"

namespace gatta {

struct Checkpoint {
  BackboneModel backbone;
  std::optional<AttentionParams> attention;
};

std::string encode_checkpoint(const BackboneModel& backbone, const AttentionParams* attention);
/// Throws IoError on a malformed manifest or a manifest/payload size mismatch.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const BackboneModel& backbone,
                     const AttentionParams* attention = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Byte range of the backbone tensors inside an encoded checkpoint's payload.
std::string backbone_payload(const std::string& encoded);

}  // namespace gatta
