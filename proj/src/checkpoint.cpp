#include "gatta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gatta/error.hpp"

namespace gatta {
namespace {

constexpr const char* kMagic = "GATTA1";

struct Entry {
  std::string name;
  std::size_t offset = 0;
  Shape shape;
};

struct Manifest {
  ToyCnnConfig config;
  std::size_t attention_dim = 0;
  std::vector<Entry> entries;
  std::size_t payload_bytes = 0;
  std::size_t header_bytes = 0;
};

void put_float(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_float(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

Manifest parse_manifest(const std::string& bytes) {
  Manifest m;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw IoError("checkpoint: truncated manifest");
    std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    return line;
  };
  auto expect = [](std::istringstream& in, const std::string& line) {
    if (!in) throw IoError("checkpoint: malformed manifest line '" + line + "'");
  };

  if (next_line() != kMagic) throw IoError("checkpoint: bad magic (expected GATTA1)");
  {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string key, arch;
    auto& c = m.config;
    in >> key >> arch >> c.height >> c.width >> c.in_channels >> c.conv_channels[0] >>
        c.conv_channels[1] >> c.conv_channels[2] >> c.hidden_units >> c.num_classes;
    expect(in, line);
    if (key != "arch" || arch != "toy_cnn") throw IoError("checkpoint: unsupported architecture");
  }
  {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string key;
    in >> key >> m.attention_dim;
    expect(in, line);
    if (key != "attention_dim") throw IoError("checkpoint: expected attention_dim");
  }
  std::size_t count = 0;
  {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string key;
    in >> key >> count;
    expect(in, line);
    if (key != "tensors") throw IoError("checkpoint: expected tensor count");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string key;
    Entry e;
    std::size_t rank = 0;
    in >> key >> e.name >> e.offset >> rank;
    expect(in, line);
    if (key != "tensor" || rank > 8) throw IoError("checkpoint: bad tensor entry '" + line + "'");
    e.shape.resize(rank);
    for (auto& d : e.shape) in >> d;
    expect(in, line);
    m.entries.push_back(std::move(e));
  }
  {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string key;
    in >> key >> m.payload_bytes;
    expect(in, line);
    if (key != "payload_bytes") throw IoError("checkpoint: expected payload_bytes");
  }
  if (next_line() != "end") throw IoError("checkpoint: expected end of manifest");
  m.header_bytes = pos;
  return m;
}

}  // namespace

std::string encode_checkpoint(const BackboneModel& backbone, const AttentionParams* attention) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& p : backbone.parameters()) tensors.push_back({p.name, &p.value});
  if (attention) {
    const auto names = attention->tensor_names();
    const auto values = attention->tensors();
    for (std::size_t i = 0; i < names.size(); ++i) tensors.push_back({names[i], values[i]});
  }

  const auto& c = backbone.config();
  std::ostringstream head;
  head << kMagic << '\n'
       << "arch toy_cnn " << c.height << ' ' << c.width << ' ' << c.in_channels << ' '
       << c.conv_channels[0] << ' ' << c.conv_channels[1] << ' ' << c.conv_channels[2] << ' '
       << c.hidden_units << ' ' << c.num_classes << '\n'
       << "attention_dim " << (attention ? attention->dim() : 0) << '\n'
       << "tensors " << tensors.size() << '\n';
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    head << "tensor " << name << ' ' << offset << ' ' << t->rank();
    for (std::size_t d : t->shape()) head << ' ' << d;
    head << '\n';
    offset += 4 * t->numel();
  }
  head << "payload_bytes " << offset << '\n' << "end\n";

  std::string out = head.str();
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : tensors)
    for (real v : t->data()) put_float(out, static_cast<float>(v));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const Manifest m = parse_manifest(bytes);
  if (bytes.size() != m.header_bytes + m.payload_bytes)
    throw IoError("checkpoint: manifest declares " + std::to_string(m.payload_bytes) +
                  " payload bytes but file carries " + std::to_string(bytes.size() - m.header_bytes));
  const char* payload = bytes.data() + m.header_bytes;
  std::size_t expected_offset = 0;
  auto read_tensor = [&](const Entry& e) {
    if (e.offset != expected_offset) throw IoError("checkpoint: tensor " + e.name + " has wrong offset");
    Tensor t(e.shape);
    if (e.offset + 4 * t.numel() > m.payload_bytes)
      throw IoError("checkpoint: tensor " + e.name + " runs past the payload");
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(get_float(payload + e.offset + 4 * i));
    expected_offset += 4 * t.numel();
    return t;
  };

  try {
    const auto layout = backbone_layout(m.config);
    if (m.entries.size() < layout.size()) throw IoError("checkpoint: missing backbone tensors");
    std::vector<NamedTensor> params;
    for (std::size_t i = 0; i < layout.size(); ++i)
      params.push_back({m.entries[i].name, read_tensor(m.entries[i])});
    Checkpoint ckpt{BackboneModel(m.config, std::move(params)), std::nullopt};

    const auto layers = ckpt.backbone.layers();
    const std::size_t rest = m.entries.size() - layout.size();
    if (m.attention_dim == 0) {
      if (rest != 0) throw IoError("checkpoint: unexpected tensors after backbone");
    } else {
      if (rest != 5 * layers.size()) throw IoError("checkpoint: attention tensor count mismatch");
      AttentionParams shell = AttentionParams::init(layers, m.attention_dim, 0);
      const auto names = shell.tensor_names();
      std::vector<LayerProjection> projections;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const Entry* e = &m.entries[layout.size() + 5 * i];
        for (std::size_t f = 0; f < 5; ++f)
          if (e[f].name != names[5 * i + f])
            throw IoError("checkpoint: expected " + names[5 * i + f] + ", found " + e[f].name);
        LayerProjection p;
        p.key_weight = read_tensor(e[0]);
        p.key_bias = read_tensor(e[1]);
        p.query_weight = read_tensor(e[2]);
        p.query_bias = read_tensor(e[3]);
        p.alpha = read_tensor(e[4]);
        projections.push_back(std::move(p));
      }
      ckpt.attention.emplace(layers, m.attention_dim, std::move(projections));
    }
    if (expected_offset != m.payload_bytes)
      throw IoError("checkpoint: payload size does not match tensor directory");
    return ckpt;
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const BackboneModel& backbone,
                     const AttentionParams* attention) {
  const std::string bytes = encode_checkpoint(backbone, attention);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

std::string backbone_payload(const std::string& encoded) {
  const Manifest m = parse_manifest(encoded);
  const std::size_t n = backbone_layout(m.config).size();
  if (m.entries.size() < n) throw IoError("checkpoint: missing backbone tensors");
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < n; ++i) bytes += 4 * shape_numel(m.entries[i].shape);
  return encoded.substr(m.header_bytes, bytes);
}

}  // namespace gatta
