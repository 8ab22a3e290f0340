#include "edk/serialize.hpp"

#include <fstream>

#include "edk/binio.hpp"

namespace edk {

void write_checkpoint(const std::string& path, const std::string& kind,
                      const nlohmann::json& meta, const nn::ParamList<float>& params) {
  nlohmann::json header;
  header["kind"] = kind;
  header["meta"] = meta;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : params)
    tensors.push_back({{"name", p.name}, {"rows", p.value->rows()}, {"cols", p.value->cols()}});
  header["checksum"] = to_hex(nn::param_checksum(params));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint file: " + path);
  io::write_envelope(out, "EDC1", header);
  for (const auto& p : params) io::write_f32_block(out, *p.value);
  if (!out) throw DataError("short write on checkpoint file: " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::string& path, const std::string& kind) {
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  nlohmann::json header = io::read_envelope(in, "EDC1", "checkpoint " + path);
  for (const char* key : {"kind", "meta", "tensors", "checksum"})
    if (!header.contains(key))
      throw DataError("malformed checkpoint header: missing key " + std::string(key));
  const auto got = header.at("kind").get<std::string>();
  if (got != kind)
    throw DataError("checkpoint " + path + " holds a '" + got + "' model, expected '" + kind +
                    "'");
  return header;
}

}  // namespace

nlohmann::json read_checkpoint_meta(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  return read_header(in, path, kind).at("meta");
}

nlohmann::json load_checkpoint(const std::string& path, const std::string& kind,
                               nn::ParamList<float>& params) {
  std::ifstream in(path, std::ios::binary);
  nlohmann::json header = read_header(in, path, kind);

  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw DataError("checkpoint " + path + ": manifest lists " + std::to_string(tensors.size()) +
                    " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors.at(i);
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (name != params[i].name)
      throw DataError("checkpoint tensor " + std::to_string(i) + " is '" + name +
                      "', model expects '" + params[i].name + "'");
    if (rows != params[i].value->rows() || cols != params[i].value->cols())
      throw DataError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", model expects " +
                      std::to_string(params[i].value->rows()) + "x" +
                      std::to_string(params[i].value->cols()));
    io::read_f32_block(in, *params[i].value, "checkpoint tensor '" + name + "'");
  }
  io::expect_eof(in, "checkpoint");

  const std::string stored = header.at("checksum").get<std::string>();
  const std::string actual = to_hex(nn::param_checksum(params));
  if (stored != actual)
    throw DataError("checkpoint " + path + " failed checksum verification (stored " + stored +
                    ", payload " + actual + ")");
  return header.at("meta");
}

}  // namespace edk
