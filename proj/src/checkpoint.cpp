#include "bepa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "bepa/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little endian");

namespace bepa::checkpoint {

using nlohmann::json;

namespace {

json config_to_json(const encoder::EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
              {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},             {"max_len", c.max_len},
              {"dropout", c.dropout}};
}

encoder::EncoderConfig config_from_json(const json& j) {
  encoder::EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

}  // namespace

void save(const std::string& path, const encoder::ModelParams& params,
          const json& train_config) {
  json table = json::array();
  std::uint64_t offset = 0;
  params.for_each([&](const std::string& name, const encoder::Matrix& m) {
    table.push_back(json{{"name", name},
                         {"rows", m.rows()},
                         {"cols", m.cols()},
                         {"offset", offset}});
    offset += sizeof(double) * static_cast<std::uint64_t>(m.size());
  });
  json header{{"format_version", kFormatVersion},
              {"encoder", config_to_json(params.config)},
              {"train", train_config},
              {"params", table}};
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));
  params.for_each([&](const std::string&, const encoder::Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  });
  out.flush();
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic), sizeof(header_len));
  const std::size_t data_start =
      sizeof(kMagic) + sizeof(std::uint64_t) + header_len;
  if (data_start > bytes.size())
    throw IoError("checkpoint header truncated: " + path);

  json header;
  try {
    header = json::parse(bytes.begin() + sizeof(kMagic) + sizeof(std::uint64_t),
                         bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
  } catch (const json::exception& e) {
    throw IoError("checkpoint header is not valid JSON: " +
                  std::string(e.what()));
  }

  Checkpoint ckpt;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw IoError("unsupported checkpoint format version");
    ckpt.params = encoder::ModelParams::allocate(
        config_from_json(header.at("encoder")));
    ckpt.train_config = header.value("train", json());

    const json& table = header.at("params");
    std::size_t entry_count = 0;
    const std::size_t data_size = bytes.size() - data_start;
    ckpt.params.for_each([&](const std::string& name, encoder::Matrix& m) {
      if (entry_count >= table.size())
        throw IoError("checkpoint parameter table is short");
      const json& e = table.at(entry_count++);
      if (e.at("name").get<std::string>() != name ||
          e.at("rows").get<Eigen::Index>() != m.rows() ||
          e.at("cols").get<Eigen::Index>() != m.cols())
        throw IoError("checkpoint parameter " + name +
                      " does not match its encoder config");
      const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
      const std::uint64_t len = sizeof(double) * static_cast<std::uint64_t>(m.size());
      if (offset + len > data_size)
        throw IoError("checkpoint data truncated at parameter " + name);
      std::memcpy(m.data(), bytes.data() + data_start + offset, len);
    });
    if (entry_count != table.size())
      throw IoError("checkpoint parameter table has extra entries");
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
  return ckpt;
}

}  // namespace bepa::checkpoint
