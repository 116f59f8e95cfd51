#include "drgaze/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "drgaze/errors.hpp"
#include "drgaze/tensor_io.hpp"

namespace drgaze {

namespace {

constexpr const char* kCheckpointMagic = "DRGZ-CHECKPOINT 1";

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("checkpoint: bad " + what + " '" + text + "'");
  }
  return v;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  if (text == "scalar") return s;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('x', start);
    s.push_back(parse_size(text.substr(start, end - start), "shape"));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return s;
}

std::string format_shape(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

CheckpointHeader parse_header(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) {
    throw FormatError("checkpoint: missing '" + std::string(kCheckpointMagic) + "' header");
  }
  CheckpointHeader h;
  while (std::getline(is, line)) {
    if (line == "end") return h;
    std::istringstream ls(line);
    std::string kind, key, value;
    ls >> kind >> key;
    std::getline(ls >> std::ws, value);
    if (kind == "config") {
      if (!apply_config_entry(h.config, key, value)) {
        throw FormatError("checkpoint: unknown config key '" + key + "'");
      }
    } else if (kind == "meta") {
      h.metadata.emplace_back(key, value);
    } else if (kind == "tensor") {
      std::istringstream vs(value);
      std::string offset, shape;
      vs >> offset >> shape;
      h.tensors.push_back({key, parse_size(offset, "offset"), parse_shape(shape)});
    } else {
      throw FormatError("checkpoint: unexpected header line '" + line + "'");
    }
  }
  throw FormatError("checkpoint: header not terminated by 'end'");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
  return {
      {"channels", std::to_string(c.eye.channels)},
      {"features", std::to_string(c.eye.features)},
      {"blocks", std::to_string(c.eye.blocks)},
      {"growth", std::to_string(c.eye.growth)},
      {"layers", std::to_string(c.eye.layers)},
      {"height", std::to_string(c.eye.height)},
      {"width", std::to_string(c.eye.width)},
      {"feature_inputs", std::to_string(c.feature_inputs)},
      {"feature_embedding", std::to_string(c.feature_embedding)},
      {"hidden", std::to_string(c.hidden)},
      {"outputs", std::to_string(c.outputs)},
      {"scale_targets", c.scale_targets ? "true" : "false"},
  };
}

bool apply_config_entry(ModelConfig& c, const std::string& key, const std::string& value) {
  std::size_t* target = nullptr;
  if (key == "channels") target = &c.eye.channels;
  else if (key == "features") target = &c.eye.features;
  else if (key == "blocks") target = &c.eye.blocks;
  else if (key == "growth") target = &c.eye.growth;
  else if (key == "layers") target = &c.eye.layers;
  else if (key == "height") target = &c.eye.height;
  else if (key == "width") target = &c.eye.width;
  else if (key == "feature_inputs") target = &c.feature_inputs;
  else if (key == "feature_embedding") target = &c.feature_embedding;
  else if (key == "hidden") target = &c.hidden;
  else if (key == "outputs") target = &c.outputs;
  else if (key == "scale_targets") {
    if (value == "true" || value == "1") c.scale_targets = true;
    else if (value == "false" || value == "0") c.scale_targets = false;
    else throw FormatError("scale_targets must be true or false, got '" + value + "'");
    return true;
  } else {
    return false;
  }
  *target = parse_size(value, key);
  return true;
}

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const DrGazeModel<T>& model,
                     const Metadata& metadata) {
  // parameters() only hands out pointers; nothing below writes through them.
  auto params = parameters(const_cast<DrGazeModel<T>&>(model));
  std::ostringstream header;
  header << kCheckpointMagic << '\n';
  for (const auto& [k, v] : config_entries(model.config)) header << "config " << k << ' ' << v << '\n';
  for (const auto& [k, v] : metadata) header << "meta " << k << ' ' << v << '\n';
  std::size_t offset = 0;
  for (const auto& p : params) {
    header << "tensor " << p.name << ' ' << offset << ' ' << format_shape(p.tensor->shape()) << '\n';
    offset += encoded_tensor_size(p.tensor->shape());
  }
  header << "end\n";

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  const std::string text = header.str();
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) write_tensor(os, *p.tensor);
  if (!os) throw FormatError("write failed for " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return parse_header(is);
}

template <Real T>
DrGazeModel<T> load_checkpoint(const std::filesystem::path& path, Metadata* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  CheckpointHeader h = parse_header(is);
  const auto data_start = is.tellg();
  DrGazeModel<T> model = make_model<T>(h.config);
  auto params = parameters(model);
  if (params.size() != h.tensors.size()) {
    throw FormatError("checkpoint " + path.string() + " lists " + std::to_string(h.tensors.size()) +
                      " tensors but its config needs " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = h.tensors[i];
    if (entry.name != params[i].name || entry.shape != params[i].tensor->shape()) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " is " + entry.name + " " +
                        shape_string(entry.shape) + ", expected " + params[i].name + " " +
                        shape_string(params[i].tensor->shape()));
    }
    is.seekg(data_start + static_cast<std::streamoff>(entry.offset));
    Tensor<T> t = read_tensor<T>(is);
    if (t.shape() != entry.shape) throw FormatError("checkpoint tensor " + entry.name + " shape mismatch");
    *params[i].tensor = std::move(t);
  }
  if (metadata) *metadata = h.metadata;
  return model;
}

template void save_checkpoint<float>(const std::filesystem::path&, const DrGazeModel<float>&,
                                     const Metadata&);
template void save_checkpoint<double>(const std::filesystem::path&, const DrGazeModel<double>&,
                                      const Metadata&);
template DrGazeModel<float> load_checkpoint<float>(const std::filesystem::path&, Metadata*);
template DrGazeModel<double> load_checkpoint<double>(const std::filesystem::path&, Metadata*);

}  // namespace drgaze
